#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sduda/dataset.hpp"

using namespace sduda;
namespace fs = std::filesystem;

namespace {

double norm3(const float* p) {
    return std::sqrt(static_cast<double>(p[0]) * p[0] + static_cast<double>(p[1]) * p[1] +
                     static_cast<double>(p[2]) * p[2]);
}

fs::path temp_dir(const char* tag) {
    auto dir = fs::temp_directory_path() / (std::string("sduda_test_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generate_shape normalizes to the unit sphere") {
    Rng rng(1);
    for (int c = 0; c < kMaxShapeClasses; ++c) {
        Rng r = rng.derive(static_cast<std::uint64_t>(c));
        auto pc = generate_shape(c, 512, r);
        REQUIRE(pc.size() == 512);
        double cx = 0, cy = 0, cz = 0, max_norm = 0;
        for (std::size_t i = 0; i < pc.size(); ++i) {
            cx += pc.point(i)[0];
            cy += pc.point(i)[1];
            cz += pc.point(i)[2];
            max_norm = std::max(max_norm, norm3(pc.point(i)));
        }
        INFO("class " << c);
        CHECK(std::abs(cx / 512) < 1e-5);
        CHECK(std::abs(cy / 512) < 1e-5);
        CHECK(std::abs(cz / 512) < 1e-5);
        CHECK(max_norm == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("generate_shape rejects bad arguments") {
    Rng rng(2);
    CHECK_THROWS_AS(generate_shape(0, 4, rng), parameter_error);
    CHECK_THROWS_AS(generate_shape(-1, 64, rng), parameter_error);
    CHECK_THROWS_AS(generate_shape(kMaxShapeClasses, 64, rng), parameter_error);
}

TEST_CASE("sphere samples sit on a common radius") {
    Rng rng(3);
    auto pc = sample_primitive(ShapeKind::sphere, 256, rng);
    const double r0 = norm3(pc.point(0));
    for (std::size_t i = 0; i < pc.size(); ++i)
        CHECK(norm3(pc.point(i)) == Catch::Approx(r0).margin(1e-5));
}

TEST_CASE("box samples lie on a face of the cuboid") {
    Rng rng(4);
    auto pc = sample_primitive(ShapeKind::box, 1000, rng);
    // recover the half extents: with 1000 points each axis is hit
    double h[3] = {0, 0, 0};
    for (std::size_t i = 0; i < pc.size(); ++i)
        for (int a = 0; a < 3; ++a)
            h[a] = std::max(h[a], std::abs(static_cast<double>(pc.point(i)[a])));
    for (std::size_t i = 0; i < pc.size(); ++i) {
        bool on_face = false;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
            const double v = std::abs(static_cast<double>(pc.point(i)[a]));
            if (v >= h[a] - 1e-5) on_face = true;
            if (v > h[a] + 1e-5) inside = false;
        }
        CHECK(on_face);
        CHECK(inside);
    }
}

TEST_CASE("cylinder samples lie on the lateral surface or a cap") {
    Rng rng(5);
    auto pc = sample_primitive(ShapeKind::cylinder, 1000, rng);
    double r = 0, half_h = 0;
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const double rr = std::hypot(static_cast<double>(pc.point(i)[0]), pc.point(i)[1]);
        r = std::max(r, rr);
        half_h = std::max(half_h, std::abs(static_cast<double>(pc.point(i)[2])));
    }
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const double rr = std::hypot(static_cast<double>(pc.point(i)[0]), pc.point(i)[1]);
        const double z = std::abs(static_cast<double>(pc.point(i)[2]));
        const bool lateral = std::abs(rr - r) < 1e-5 && z <= half_h + 1e-5;
        const bool cap = std::abs(z - half_h) < 1e-5 && rr <= r + 1e-5;
        CHECK((lateral || cap));
    }
}

TEST_CASE("apply_domain") {
    Rng rng(6);
    auto pc = generate_shape(0, 128, rng);
    SECTION("source default is a bitwise identity") {
        Rng r(7);
        CHECK(apply_domain(pc, DomainSpec::source_default(), r).xyz == pc.xyz);
    }
    SECTION("target default preserves cardinality") {
        Rng r(8);
        CHECK(apply_domain(pc, DomainSpec::target_default(), r).size() == pc.size());
    }
    SECTION("pure scale bias multiplies each axis exactly") {
        DomainSpec spec;
        spec.scale_bias[0] = 1.15;
        spec.scale_bias[1] = 0.9;
        spec.scale_bias[2] = 1.05;
        Rng r(9);
        auto out = apply_domain(pc, spec, r);
        for (std::size_t i = 0; i < pc.size(); ++i)
            for (int a = 0; a < 3; ++a)
                CHECK(out.point(i)[a] ==
                      Catch::Approx(pc.point(i)[a] * spec.scale_bias[a]).margin(1e-7));
    }
}

TEST_CASE("make_dataset") {
    Rng root(42);
    SECTION("balanced and labelled") {
        auto ds = make_dataset(4, 3, 32, DomainSpec::source_default(), root, 0);
        REQUIRE(ds.size() == 12);
        int count[4] = {0, 0, 0, 0};
        for (const auto& s : ds) {
            REQUIRE(s.label >= 0);
            REQUIRE(s.label < 4);
            ++count[s.label];
            CHECK(s.pc.size() == 32);
        }
        for (int c : count) CHECK(c == 3);
    }
    SECTION("bitwise deterministic") {
        auto a = make_dataset(2, 4, 16, DomainSpec::target_default(), root, 1);
        auto b = make_dataset(2, 4, 16, DomainSpec::target_default(), root, 1);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pc.xyz == b[i].pc.xyz);
    }
    SECTION("samples are stable when the set grows") {
        // per-sample derived streams: sample (c, i) must not depend on per_class
        auto small = make_dataset(2, 2, 16, DomainSpec::source_default(), root, 2);
        auto big = make_dataset(2, 5, 16, DomainSpec::source_default(), root, 2);
        CHECK(small[0].pc.xyz == big[0].pc.xyz);   // class 0, i 0
        CHECK(small[2].pc.xyz == big[5].pc.xyz);   // class 1, i 0
    }
    SECTION("different split tags differ") {
        auto a = make_dataset(1, 1, 64, DomainSpec::source_default(), root, 0);
        auto b = make_dataset(1, 1, 64, DomainSpec::source_default(), root, 1);
        CHECK(a[0].pc.xyz != b[0].pc.xyz);
    }
    SECTION("bad arguments rejected") {
        CHECK_THROWS_AS(make_dataset(0, 1, 16, DomainSpec::source_default(), root, 0),
                        parameter_error);
        CHECK_THROWS_AS(make_dataset(5, 1, 16, DomainSpec::source_default(), root, 0),
                        parameter_error);
        CHECK_THROWS_AS(make_dataset(2, 0, 16, DomainSpec::source_default(), root, 0),
                        parameter_error);
    }
}

TEST_CASE("pcd round trip is bitwise") {
    auto dir = temp_dir("pcd");
    Rng rng(10);
    PointCloud pc;
    pc.xyz.resize(3 * 50);
    for (auto& v : pc.xyz) v = static_cast<float>(rng.uniform(-2, 2));
    const auto path = (dir / "a.pcd").string();
    write_pcd(pc, path);
    CHECK(read_pcd(path).xyz == pc.xyz);
    fs::remove_all(dir);
}

TEST_CASE("pcd reader reports corruption with byte offsets") {
    auto dir = temp_dir("pcd_bad");
    SECTION("bad magic") {
        std::ofstream((dir / "bad.pcd").string(), std::ios::binary) << "NOPE....";
        CHECK_THROWS_WITH(read_pcd((dir / "bad.pcd").string()),
                          Catch::Matchers::ContainsSubstring("byte 0"));
    }
    SECTION("truncated payload") {
        PointCloud pc;
        pc.xyz = {1, 2, 3};
        const auto path = (dir / "trunc.pcd").string();
        write_pcd(pc, path);
        fs::resize_file(path, 12);  // header + one float
        CHECK_THROWS_AS(read_pcd(path), format_error);
        CHECK_THROWS_WITH(read_pcd(path), Catch::Matchers::ContainsSubstring("byte 12"));
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset directory round trip") {
    auto dir = temp_dir("ds");
    Rng root(11);
    auto ds = make_dataset(3, 2, 16, DomainSpec::source_default(), root, 0);
    write_dataset(dir.string(), ds, "source");
    auto back = read_dataset(dir.string(), 3);
    REQUIRE(back.samples.size() == ds.size());
    CHECK(back.domain == "source");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].label == ds[i].label);
        CHECK(back.samples[i].pc.xyz == ds[i].pc.xyz);
    }
    SECTION("label range validated against num_classes") {
        CHECK_THROWS_AS(read_dataset(dir.string(), 2), format_error);
    }
    SECTION("missing manifest") {
        CHECK_THROWS_AS(read_dataset((dir / "nope").string()), format_error);
    }
    fs::remove_all(dir);
}
