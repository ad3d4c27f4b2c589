#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/rng.hpp"

namespace sduda {

// N x 3 coordinate array, row-major (x,y,z interleaved), float32 to match
// the on-disk sample format.
struct PointCloud {
    std::vector<float> xyz;

    std::size_t size() const { return xyz.size() / 3; }
    float* point(std::size_t i) { return xyz.data() + 3 * i; }
    const float* point(std::size_t i) const { return xyz.data() + 3 * i; }
};

struct AugmentConfig {
    double jitter_sigma = 0.01;
    double jitter_clip = 0.05;
    double scale_low = 0.8;
    double scale_high = 1.2;
    int elastic_grid = 3;
    double elastic_mag = 0.05;
    double removal_frac_low = 0.1;
    double removal_frac_high = 0.4;
    bool enable_removal = false;
};

// Per-coordinate Gaussian noise, clamped to [-clip, clip].
inline PointCloud jitter(const PointCloud& pc, double sigma, double clip, Rng& rng) {
    if (sigma < 0 || clip < 0) throw parameter_error("jitter: sigma and clip must be >= 0");
    if (sigma == 0.0) return pc;
    PointCloud out = pc;
    for (auto& c : out.xyz)
        c = static_cast<float>(static_cast<double>(c) + rng.truncated_normal(sigma, clip));
    return out;
}

// One uniform[low, high] factor per axis.
inline PointCloud anisotropic_scale(const PointCloud& pc, Rng& rng, double low, double high) {
    if (!(0 < low && low <= high))
        throw parameter_error("anisotropic_scale: need 0 < low <= high");
    double s[3];
    for (double& f : s) f = rng.uniform(low, high);
    PointCloud out = pc;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int a = 0; a < 3; ++a)
            out.point(i)[a] = static_cast<float>(static_cast<double>(out.point(i)[a]) * s[a]);
    return out;
}

// Gaussian displacement lattice over the bounding box, applied by trilinear
// interpolation. Lattice vectors are drawn in (node, axis) order.
inline PointCloud elastic_deform(const PointCloud& pc, int grid, double magnitude, Rng& rng) {
    if (grid < 2) throw parameter_error("elastic_deform: grid must be >= 2");
    if (magnitude < 0) throw parameter_error("elastic_deform: magnitude must be >= 0");
    const std::size_t n = pc.size();
    if (n == 0 || magnitude == 0.0) return pc;

    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) lo[a] = hi[a] = pc.point(0)[a];
    for (std::size_t i = 1; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], static_cast<double>(pc.point(i)[a]));
            hi[a] = std::max(hi[a], static_cast<double>(pc.point(i)[a]));
        }
    if (lo[0] == hi[0] && lo[1] == hi[1] && lo[2] == hi[2]) return pc;

    const int g = grid;
    std::vector<std::array<double, 3>> field(static_cast<std::size_t>(g) * g * g);
    for (auto& v : field)
        for (int a = 0; a < 3; ++a) v[a] = rng.normal() * magnitude;

    auto node_at = [&](int ix, int iy, int iz) -> const std::array<double, 3>& {
        return field[(static_cast<std::size_t>(ix) * g + iy) * g + iz];
    };

    PointCloud out = pc;
    for (std::size_t i = 0; i < n; ++i) {
        double u[3];
        for (int a = 0; a < 3; ++a) {
            const double extent = hi[a] - lo[a];
            u[a] = extent > 0 ? (pc.point(i)[a] - lo[a]) / extent * (g - 1) : 0.0;
        }
        int cell[3];
        double frac[3];
        for (int a = 0; a < 3; ++a) {
            cell[a] = std::min(static_cast<int>(u[a]), g - 2);
            frac[a] = u[a] - cell[a];
        }
        double disp[3] = {0, 0, 0};
        for (int dx = 0; dx < 2; ++dx)
            for (int dy = 0; dy < 2; ++dy)
                for (int dz = 0; dz < 2; ++dz) {
                    const double w = (dx ? frac[0] : 1 - frac[0]) * (dy ? frac[1] : 1 - frac[1]) *
                                     (dz ? frac[2] : 1 - frac[2]);
                    const auto& v = node_at(cell[0] + dx, cell[1] + dy, cell[2] + dz);
                    for (int a = 0; a < 3; ++a) disp[a] += w * v[a];
                }
        for (int a = 0; a < 3; ++a)
            out.point(i)[a] = static_cast<float>(static_cast<double>(pc.point(i)[a]) + disp[a]);
    }
    return out;
}

// Deletes the floor(frac*N) nearest neighbours of a random anchor (anchor
// included), then restores cardinality by duplicating surviving points.
inline PointCloud random_point_removal(const PointCloud& pc, double frac, Rng& rng) {
    if (frac < 0 || frac >= 1) throw parameter_error("random_point_removal: need 0 <= frac < 1");
    const std::size_t n = pc.size();
    const std::size_t k = static_cast<std::size_t>(frac * static_cast<double>(n));
    if (k == 0 || n == 0) return pc;

    const std::size_t anchor = rng.uniform_int(n);
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d2 = 0;
        for (int a = 0; a < 3; ++a) {
            const double d = static_cast<double>(pc.point(i)[a]) - pc.point(anchor)[a];
            d2 += d * d;
        }
        dist[i] = {d2, i};
    }
    std::sort(dist.begin(), dist.end());
    std::vector<char> removed(n, 0);
    for (std::size_t i = 0; i < k; ++i) removed[dist[i].second] = 1;

    PointCloud out;
    out.xyz.reserve(pc.xyz.size());
    std::vector<std::size_t> survivors;
    survivors.reserve(n - k);
    for (std::size_t i = 0; i < n; ++i)
        if (!removed[i]) {
            survivors.push_back(i);
            out.xyz.insert(out.xyz.end(), pc.point(i), pc.point(i) + 3);
        }
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t src = survivors[rng.uniform_int(survivors.size())];
        out.xyz.insert(out.xyz.end(), pc.point(src), pc.point(src) + 3);
    }
    return out;
}

// Weak augmentation f': jitter only.
inline PointCloud f_weak(const PointCloud& pc, const AugmentConfig& cfg, Rng& rng) {
    return jitter(pc, cfg.jitter_sigma, cfg.jitter_clip, rng);
}

// Strong augmentation f'': jitter, elastic deformation, anisotropic scale,
// plus random point removal in the synthetic-to-real setting.
inline PointCloud f_strong(const PointCloud& pc, const AugmentConfig& cfg, Rng& rng) {
    PointCloud out = jitter(pc, cfg.jitter_sigma, cfg.jitter_clip, rng);
    out = elastic_deform(out, cfg.elastic_grid, cfg.elastic_mag, rng);
    out = anisotropic_scale(out, rng, cfg.scale_low, cfg.scale_high);
    if (cfg.enable_removal) {
        const double frac = rng.uniform(cfg.removal_frac_low, cfg.removal_frac_high);
        out = random_point_removal(out, frac, rng);
    }
    return out;
}

}  // namespace sduda
