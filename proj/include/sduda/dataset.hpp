#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/pointcloud.hpp"
#include "sduda/rng.hpp"

namespace sduda {

enum class ShapeKind { sphere = 0, box = 1, cylinder = 2, cone = 3 };

inline constexpr int kMaxShapeClasses = 4;

struct Sample {
    PointCloud pc;
    int label = -1;
};

struct DomainSpec {
    enum class Role { source, target };
    Role role = Role::source;
    double noise_sigma = 0.0;
    double occlusion_frac = 0.0;
    double scale_bias[3] = {1.0, 1.0, 1.0};

    static DomainSpec source_default() { return DomainSpec{}; }
    static DomainSpec target_default() {
        DomainSpec s;
        s.role = Role::target;
        s.noise_sigma = 0.02;
        s.occlusion_frac = 0.3;
        s.scale_bias[0] = 1.15;
        s.scale_bias[1] = 0.9;
        s.scale_bias[2] = 1.05;
        return s;
    }
};

namespace detail {

inline void unit_direction(Rng& rng, double out[3]) {
    double n2;
    do {
        for (int a = 0; a < 3; ++a) out[a] = rng.normal();
        n2 = out[0] * out[0] + out[1] * out[1] + out[2] * out[2];
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (int a = 0; a < 3; ++a) out[a] *= inv;
}

}  // namespace detail

// Uniform surface sampling of a primitive with randomized size parameters,
// centered at the origin but not yet normalized.
inline PointCloud sample_primitive(ShapeKind kind, std::size_t n, Rng& rng) {
    PointCloud pc;
    pc.xyz.resize(3 * n);
    auto put = [&](std::size_t i, double x, double y, double z) {
        pc.xyz[3 * i] = static_cast<float>(x);
        pc.xyz[3 * i + 1] = static_cast<float>(y);
        pc.xyz[3 * i + 2] = static_cast<float>(z);
    };
    switch (kind) {
        case ShapeKind::sphere: {
            const double r = rng.uniform(0.5, 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                double d[3];
                detail::unit_direction(rng, d);
                put(i, r * d[0], r * d[1], r * d[2]);
            }
            break;
        }
        case ShapeKind::box: {
            // broad iid extents: silhouettes overlap across classes, so the
            // telling features (corners, curvature, taper) carry the decision
            double h[3];
            for (double& v : h) v = rng.uniform(0.05, 1.0);
            // face areas: +-x is h1*h2 etc.
            const double area[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
            const double total = area[0] + area[1] + area[2];
            for (std::size_t i = 0; i < n; ++i) {
                const double pick = rng.uniform(0.0, total);
                const int axis = pick < area[0] ? 0 : (pick < area[0] + area[1] ? 1 : 2);
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                double p[3];
                for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-h[a], h[a]);
                p[axis] = sign * h[axis];
                put(i, p[0], p[1], p[2]);
            }
            break;
        }
        case ShapeKind::cylinder: {
            const double r = rng.uniform(0.05, 1.0);
            const double h = rng.uniform(0.1, 2.5);
            const double lateral = 2.0 * 3.141592653589793 * r * h;
            const double caps = 2.0 * 3.141592653589793 * r * r;
            for (std::size_t i = 0; i < n; ++i) {
                const double pick = rng.uniform(0.0, lateral + caps);
                const double phi = rng.uniform(0.0, 2.0 * 3.141592653589793);
                if (pick < lateral) {
                    const double z = rng.uniform(-h / 2, h / 2);
                    put(i, r * std::cos(phi), r * std::sin(phi), z);
                } else {
                    const double rr = r * std::sqrt(rng.uniform());
                    const double z = rng.uniform() < 0.5 ? -h / 2 : h / 2;
                    put(i, rr * std::cos(phi), rr * std::sin(phi), z);
                }
            }
            break;
        }
        case ShapeKind::cone: {
            const double r = rng.uniform(0.05, 1.0);
            const double h = rng.uniform(0.1, 2.5);
            const double slant = std::sqrt(r * r + h * h);
            const double lateral = 3.141592653589793 * r * slant;
            const double base = 3.141592653589793 * r * r;
            for (std::size_t i = 0; i < n; ++i) {
                const double pick = rng.uniform(0.0, lateral + base);
                const double phi = rng.uniform(0.0, 2.0 * 3.141592653589793);
                if (pick < lateral) {
                    // uniform over the lateral surface: radius ~ sqrt(u)
                    const double t = std::sqrt(rng.uniform());
                    const double rr = r * t;
                    put(i, rr * std::cos(phi), rr * std::sin(phi), h / 2 - h * t);
                } else {
                    const double rr = r * std::sqrt(rng.uniform());
                    put(i, rr * std::cos(phi), rr * std::sin(phi), -h / 2);
                }
            }
            break;
        }
    }
    return pc;
}

// Center on the centroid and scale so the farthest point sits on the unit
// sphere.
inline PointCloud normalize_to_unit_sphere(const PointCloud& pc) {
    const std::size_t n = pc.size();
    if (n == 0) return pc;
    double c[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) c[a] += pc.point(i)[a];
    for (double& v : c) v /= static_cast<double>(n);
    double max_norm = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double d2 = 0;
        for (int a = 0; a < 3; ++a) {
            const double d = pc.point(i)[a] - c[a];
            d2 += d * d;
        }
        max_norm = std::max(max_norm, std::sqrt(d2));
    }
    PointCloud out = pc;
    const double inv = max_norm > 0 ? 1.0 / max_norm : 1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
            out.point(i)[a] = static_cast<float>((pc.point(i)[a] - c[a]) * inv);
    return out;
}

inline PointCloud generate_shape(int class_id, std::size_t n, Rng& rng) {
    if (n < 8) throw parameter_error("generate_shape: need N >= 8");
    if (class_id < 0 || class_id >= kMaxShapeClasses)
        throw parameter_error("generate_shape: class id out of range");
    return normalize_to_unit_sphere(sample_primitive(static_cast<ShapeKind>(class_id), n, rng));
}

// Applies the domain's fixed scale bias, acquisition noise and occlusion.
inline PointCloud apply_domain(const PointCloud& pc, const DomainSpec& spec, Rng& rng) {
    PointCloud out = pc;
    if (spec.scale_bias[0] != 1.0 || spec.scale_bias[1] != 1.0 || spec.scale_bias[2] != 1.0) {
        for (std::size_t i = 0; i < out.size(); ++i)
            for (int a = 0; a < 3; ++a)
                out.point(i)[a] = static_cast<float>(out.point(i)[a] * spec.scale_bias[a]);
    }
    if (spec.noise_sigma > 0)
        out = jitter(out, spec.noise_sigma, 4.0 * spec.noise_sigma, rng);
    if (spec.occlusion_frac > 0)
        out = random_point_removal(out, spec.occlusion_frac, rng);
    return out;
}

// Deterministic balanced dataset: per_class samples for each of k classes.
inline std::vector<Sample> make_dataset(int k, int per_class, std::size_t points,
                                        const DomainSpec& spec, const Rng& root,
                                        std::uint64_t split_tag) {
    if (k < 1 || k > kMaxShapeClasses)
        throw parameter_error("make_dataset: classes must be in [1, " +
                              std::to_string(kMaxShapeClasses) + "]");
    if (per_class < 1) throw parameter_error("make_dataset: per_class must be >= 1");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(k) * per_class);
    for (int c = 0; c < k; ++c) {
        for (int i = 0; i < per_class; ++i) {
            Rng gen_rng = root.derive(split_tag, static_cast<std::uint64_t>(c),
                                      static_cast<std::uint64_t>(i));
            Rng dom_rng = gen_rng.derive(1000);
            Sample s;
            s.label = c;
            s.pc = apply_domain(generate_shape(c, points, gen_rng), spec, dom_rng);
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---- on-disk format -------------------------------------------------------
// Per-sample file: magic "PCD1", uint32 LE point count, N x 3 float32 LE.
// Directory manifest: manifest.tsv with header path<TAB>label<TAB>domain.

inline void write_pcd(const PointCloud& pc, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open for writing: " + path);
    os.write("PCD1", 4);
    const std::uint32_t n = static_cast<std::uint32_t>(pc.size());
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
    for (float f : pc.xyz) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!os) throw format_error("write failure: " + path);
}

inline PointCloud read_pcd(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open: " + path);
    unsigned char hdr[8];
    is.read(reinterpret_cast<char*>(hdr), 8);
    if (is.gcount() != 8) throw format_error("truncated header at byte 0 in " + path);
    if (std::memcmp(hdr, "PCD1", 4) != 0) throw format_error("bad magic at byte 0 in " + path);
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(hdr[4 + i]) << (8 * i);
    PointCloud pc;
    pc.xyz.resize(static_cast<std::size_t>(n) * 3);
    for (std::size_t i = 0; i < pc.xyz.size(); ++i) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (is.gcount() != 4)
            throw format_error("truncated payload at byte " + std::to_string(8 + 4 * i) + " in " +
                               path);
        std::uint32_t bits = 0;
        for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(b[j]) << (8 * j);
        std::memcpy(&pc.xyz[i], &bits, 4);
    }
    return pc;
}

inline void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                          const std::string& domain) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw format_error("cannot write manifest in " + dir);
    manifest << "path\tlabel\tdomain\n";
    char name[32];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "sample_%05zu.pcd", i);
        write_pcd(samples[i].pc, (fs::path(dir) / name).string());
        manifest << name << "\t" << samples[i].label << "\t" << domain << "\n";
    }
}

struct DatasetOnDisk {
    std::vector<Sample> samples;
    std::string domain;
};

inline DatasetOnDisk read_dataset(const std::string& dir, int num_classes = -1) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw format_error("missing manifest.tsv in " + dir);
    std::string line;
    if (!std::getline(manifest, line) || line != "path\tlabel\tdomain")
        throw format_error("bad manifest header in " + dir);
    DatasetOnDisk ds;
    std::size_t lineno = 1;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string path, label_str, domain;
        if (!std::getline(ss, path, '\t') || !std::getline(ss, label_str, '\t') ||
            !std::getline(ss, domain))
            throw format_error("malformed manifest line " + std::to_string(lineno) + " in " + dir);
        Sample s;
        s.label = std::stoi(label_str);
        if (s.label < 0 || (num_classes > 0 && s.label >= num_classes))
            throw format_error("label " + label_str + " out of range on manifest line " +
                               std::to_string(lineno) + " in " + dir);
        s.pc = read_pcd((fs::path(dir) / path).string());
        ds.samples.push_back(std::move(s));
        if (ds.domain.empty()) ds.domain = domain;
    }
    return ds;
}

}  // namespace sduda
