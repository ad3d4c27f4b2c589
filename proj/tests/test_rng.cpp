#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sduda/rng.hpp"

using namespace sduda;

TEST_CASE("identical seed and stream reproduce bitwise") {
    Rng a(123, 7), b(123, 7);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams are independent of call order") {
    Rng root(99);
    Rng a = root.derive(1, 2, 3);
    root.next_u64();  // consuming from the parent must not affect children
    Rng b = root.derive(1, 2, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different streams differ") {
    Rng root(99);
    Rng a = root.derive(1);
    Rng b = root.derive(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("uniform lies in [0,1) and has the right mean") {
    Rng rng(5);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / n == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("normal moments") {
    Rng rng(11);
    double sum = 0, sumsq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    CHECK(mean == Catch::Approx(0.0).margin(0.02));
    CHECK(std::sqrt(sumsq / n - mean * mean) == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("truncated normal respects the clip") {
    Rng rng(13);
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.truncated_normal(1.0, 1.5);
        REQUIRE(x >= -1.5);
        REQUIRE(x <= 1.5);
    }
}

TEST_CASE("shuffle is a permutation and deterministic") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    Rng a(21), b(21);
    auto v1 = v, v2 = v;
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v1.begin(), v1.end());
    CHECK(v1 == v);
}
