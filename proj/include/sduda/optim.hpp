#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/rng.hpp"
#include "sduda/tensor.hpp"

namespace sduda {

// Named parameter map. std::map keeps iteration lexicographic, which the
// optimizer, checkpoint writer and EMA update all rely on for determinism.
template <typename Real>
struct ParameterStore {
    std::map<std::string, Tensor<Real>> params;
    long long step = 0;

    Tensor<Real>& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw state_error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<Real>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw state_error("unknown parameter: " + name);
        return it->second;
    }

    void add(const std::string& name, Tensor<Real> t) {
        if (params.count(name)) throw state_error("duplicate parameter: " + name);
        params.emplace(name, std::move(t));
    }

    void zero_grad() {
        for (auto& [name, t] : params) t.zero_grad();
    }
};

// Glorot-uniform matrix parameter.
template <typename Real>
Tensor<Real> glorot_init(int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<Real> w(static_cast<std::size_t>(fan_in) * fan_out);
    for (auto& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
    return Tensor<Real>(fan_in, fan_out, std::move(w), true);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Real>
struct AdamState {
    std::map<std::string, std::pair<std::vector<Real>, std::vector<Real>>> moments;
};

// Bias-corrected Adam over every trainable parameter; gradients are zeroed
// after application.
template <typename Real>
void adam_step(ParameterStore<Real>& store, AdamState<Real>& state, const AdamConfig& cfg) {
    store.step += 1;
    const double t = static_cast<double>(store.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : store.params) {
        if (!p.requires_grad()) continue;
        if (!p.has_grad()) throw state_error("adam_step: missing gradient on parameter " + name);
        auto& [m, v] = state.moments[name];
        if (m.empty()) {
            m.assign(p.size(), Real(0));
            v.assign(p.size(), Real(0));
        }
        const Real b1 = static_cast<Real>(cfg.beta1);
        const Real b2 = static_cast<Real>(cfg.beta2);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const Real g = p.grad()[i];
            m[i] = b1 * m[i] + (Real(1) - b1) * g;
            v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
            const double mhat = static_cast<double>(m[i]) / bc1;
            const double vhat = static_cast<double>(v[i]) / bc2;
            p.data()[i] -= static_cast<Real>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
        p.zero_grad();
    }
}

struct FdReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t checked = 0;
};

// Central finite-difference check of d(scalar)/d(input) against the
// analytic gradient. `make_scalar` must rebuild the expression from the
// given leaf each time, since the leaf's value is perturbed in place.
template <typename Real, typename F>
FdReport fd_check(F&& make_scalar, Tensor<Real>& input, double step, double tol) {
    FdReport report;
    input.zero_grad();
    Tensor<Real> loss = make_scalar();
    backward(loss);
    if (!input.has_grad()) throw state_error("fd_check: input received no gradient");
    std::vector<Real> analytic = input.grad();
    for (std::size_t i = 0; i < input.size(); ++i) {
        const Real saved = input.data()[i];
        input.data()[i] = saved + static_cast<Real>(step);
        const double fp = static_cast<double>(make_scalar().item());
        input.data()[i] = saved - static_cast<Real>(step);
        const double fm = static_cast<double>(make_scalar().item());
        input.data()[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = static_cast<double>(analytic[i]);
        if (std::abs(a) < 1e-9 && std::abs(numeric) < 1e-9) continue;
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.checked;
    }
    report.pass = report.max_rel_err < tol;
    input.zero_grad();
    return report;
}

}  // namespace sduda
