#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sduda/optim.hpp"
#include "sduda/tensor.hpp"

using namespace sduda;
using T = Tensor<double>;

TEST_CASE("matmul identity") {
    T a(2, 2, {1, 0, 0, 1});
    T b(2, 2, {3, 4, 5, 6});
    auto c = matmul(a, b);
    CHECK(c.data() == std::vector<double>{3, 4, 5, 6});
}

TEST_CASE("matmul scalar reference") {
    T a(1, 2, {1, 2});
    T b(2, 1, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    T a(2, 3, std::vector<double>(6, 1.0));
    T b(2, 2, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("2x3") &&
                                        Catch::Matchers::ContainsSubstring("2x2"));
}

TEST_CASE("matmul gradient of sum equals broadcast column sums") {
    T a(2, 3, {0.1, -0.4, 0.7, 1.3, 0.2, -0.9}, true);
    T b(3, 2, {1, 2, 3, 4, 5, 6});
    auto loss = sum_all(matmul(a, b));
    backward(loss);
    // dL/da_ij = sum of row j of b
    for (int i = 0; i < 2; ++i) {
        CHECK(a.grad()[i * 3 + 0] == Catch::Approx(3.0));
        CHECK(a.grad()[i * 3 + 1] == Catch::Approx(7.0));
        CHECK(a.grad()[i * 3 + 2] == Catch::Approx(11.0));
    }
}

TEST_CASE("relu values and gradient") {
    T x(1, 3, {-1, 0, 2}, true);
    auto y = relu(x);
    CHECK(y.data() == std::vector<double>{0, 0, 2});
    backward(sum_all(y));
    CHECK(x.grad() == std::vector<double>{0, 0, 1});
}

TEST_CASE("relu all-negative input") {
    T x(1, 4, {-3, -1, -0.5, -2}, true);
    auto y = relu(x);
    for (double v : y.data()) CHECK(v == 0.0);
    backward(sum_all(y));
    for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("row_softmax basics") {
    SECTION("constant row is uniform for any temperature") {
        T x(1, 4, {2.5, 2.5, 2.5, 2.5});
        for (double tau : {1.0, 0.5, 0.1}) {
            auto q = row_softmax(x, tau);
            for (double v : q.data()) CHECK(v == Catch::Approx(0.25));
        }
    }
    SECTION("scalar reference e^2/(e^2+1)") {
        T x(1, 2, {1, 0});
        auto q = row_softmax(x, 0.5);
        const double e2 = std::exp(2.0);
        CHECK(q.data()[0] == Catch::Approx(e2 / (e2 + 1)).epsilon(1e-10));
        CHECK(q.data()[0] == Catch::Approx(0.8808).margin(5e-5));
        CHECK(q.data()[1] == Catch::Approx(0.1192).margin(5e-5));
    }
    SECTION("lowering tau sharpens the max entry") {
        T x(1, 2, {1, 0});
        const double hi = row_softmax(x, 1.0).data()[0];
        const double lo = row_softmax(x, 0.5).data()[0];
        CHECK(lo > hi);
    }
    SECTION("rows sum to one and are shift invariant") {
        Rng rng(7);
        std::vector<double> v(12), shifted(12);
        for (int i = 0; i < 12; ++i) v[i] = rng.uniform(-3, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) shifted[r * 4 + c] = v[r * 4 + c] + 17.5;
        auto q = row_softmax(T(3, 4, v), 0.7);
        auto q2 = row_softmax(T(3, 4, shifted), 0.7);
        for (int r = 0; r < 3; ++r) {
            double s = 0;
            for (int c = 0; c < 4; ++c) {
                s += q.at(r, c);
                CHECK(q.at(r, c) > 0.0);
                CHECK(q.at(r, c) < 1.0);
                CHECK(q.at(r, c) == Catch::Approx(q2.at(r, c)).epsilon(1e-12));
            }
            CHECK(s == Catch::Approx(1.0).margin(1e-6));
        }
    }
    SECTION("non-positive temperature rejected") {
        T x(1, 2, {1, 0});
        CHECK_THROWS_AS(row_softmax(x, 0.0), parameter_error);
        CHECK_THROWS_AS(row_softmax(x, -1.0), parameter_error);
    }
}

TEST_CASE("cross_entropy scalar references") {
    SECTION("matched halves give ln 2") {
        T t(1, 2, {0.5, 0.5});
        T p(1, 2, {0.5, 0.5});
        CHECK(cross_entropy(t, p).item() == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SECTION("matched one-hot is ~0") {
        T t(1, 2, {1, 0});
        T p(1, 2, {1.0 - 1e-12, 1e-12});
        CHECK(cross_entropy(t, p).item() == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("uniform prediction over 4 classes vs one-hot is ln 4") {
        T t(1, 4, {0, 0, 1, 0});
        T p(1, 4, {0.25, 0.25, 0.25, 0.25});
        CHECK(cross_entropy(t, p).item() == Catch::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SECTION("NaN input rejected") {
        T t(1, 2, {0.5, 0.5});
        T p(1, 2, {std::nan(""), 0.5});
        CHECK_THROWS_AS(cross_entropy(t, p), numeric_error);
    }
}

TEST_CASE("column_max_pool") {
    SECTION("single row passes through") {
        T x(1, 3, {4, -1, 0.5});
        CHECK(column_max_pool(x).data() == std::vector<double>{4, -1, 0.5});
    }
    SECTION("enumerated example") {
        T x(2, 2, {1, 5, 3, 2});
        CHECK(column_max_pool(x).data() == std::vector<double>{3, 5});
    }
    SECTION("bitwise permutation invariance") {
        T x(3, 2, {0.1, 5.3, 3.7, 2.2, -1.0, 4.4});
        T perm(3, 2, {-1.0, 4.4, 0.1, 5.3, 3.7, 2.2});
        CHECK(column_max_pool(x).data() == column_max_pool(perm).data());
    }
    SECTION("gradient routed to first argmax row") {
        T x(3, 2, {1, 2, 3, 2, 3, 1}, true);  // col0 max at row 1/2 tie -> row 1; col1 tie rows 0,1 -> row 0
        backward(sum_all(column_max_pool(x)));
        CHECK(x.grad() == std::vector<double>{0, 1, 1, 0, 0, 0});
    }
    SECTION("empty input is a dimension error") {
        CHECK_THROWS_AS(column_max_pool(T(0, 2, {})), dimension_error);
    }
}

TEST_CASE("fd_check elementwise and matmul") {
    Rng rng(42);
    SECTION("relu away from zero") {
        std::vector<double> v(6);
        for (auto& x : v) x = rng.uniform(0.2, 2.0) * (rng.uniform() < 0.5 ? -1 : 1);
        T x(2, 3, v, true);
        auto rep = fd_check([&] { return sum_all(relu(x)); }, x, 1e-5, 1e-6);
        CHECK(rep.pass);
    }
    SECTION("matmul 3x3") {
        std::vector<double> va(9), vb(9);
        for (auto& x : va) x = rng.uniform(-1, 1);
        for (auto& x : vb) x = rng.uniform(-1, 1);
        T a(3, 3, va, true);
        T b(3, 3, vb);
        auto rep = fd_check([&] { return sum_all(matmul(a, b)); }, a, 1e-5, 1e-6);
        CHECK(rep.pass);
    }
    SECTION("softmax + cross entropy chain") {
        std::vector<double> v(8);
        for (auto& x : v) x = rng.uniform(-1, 1);
        T x(2, 4, v, true);
        T t(2, 4, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25});
        auto rep = fd_check([&] { return cross_entropy(t, row_softmax(x, 0.5)); }, x, 1e-5, 1e-6);
        CHECK(rep.pass);
    }
}

TEST_CASE("adam_step") {
    SECTION("zero gradients leave parameters unchanged") {
        ParameterStore<double> store;
        store.add("w", Tensor<double>(1, 3, {1, 2, 3}, true));
        store.at("w").node()->ensure_grad();
        AdamState<double> state;
        adam_step(store, state, AdamConfig{});
        CHECK(store.at("w").data() == std::vector<double>{1, 2, 3});
    }
    SECTION("first step with unit gradient moves by about -lr") {
        ParameterStore<double> store;
        store.add("w", Tensor<double>(1, 1, {0.0}, true));
        store.at("w").node()->ensure_grad();
        store.at("w").grad()[0] = 1.0;
        AdamState<double> state;
        AdamConfig cfg;
        cfg.lr = 0.1;
        adam_step(store, state, cfg);
        // bias-corrected first step: -lr * g / (|g| + eps') ~ -lr
        CHECK(store.at("w").data()[0] == Catch::Approx(-0.1).margin(1e-6));
        CHECK(store.at("w").grad()[0] == 0.0);  // zeroed after application
    }
    SECTION("identical stores and gradients give bitwise-identical results") {
        auto make = [] {
            ParameterStore<double> s;
            s.add("w", Tensor<double>(1, 2, {0.5, -0.25}, true));
            s.at("w").node()->ensure_grad();
            s.at("w").grad() = {0.3, -0.7};
            return s;
        };
        auto s1 = make();
        auto s2 = make();
        AdamState<double> st1, st2;
        adam_step(s1, st1, AdamConfig{});
        adam_step(s2, st2, AdamConfig{});
        CHECK(s1.at("w").data() == s2.at("w").data());
    }
    SECTION("missing gradient is a state error naming the parameter") {
        ParameterStore<double> store;
        store.add("enc/W", Tensor<double>(1, 1, {1.0}, true));
        AdamState<double> state;
        CHECK_THROWS_WITH(adam_step(store, state, AdamConfig{}),
                          Catch::Matchers::ContainsSubstring("enc/W"));
    }
}
