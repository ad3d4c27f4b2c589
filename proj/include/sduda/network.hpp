#pragma once

#include <string>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/optim.hpp"
#include "sduda/pointcloud.hpp"
#include "sduda/tensor.hpp"

namespace sduda {

// Encoder: shared per-point MLP (ReLU between layers) followed by a column
// max pool. Head: small MLP ending in a K-way softmax.
struct EncoderConfig {
    std::vector<int> point_mlp_widths{3, 64, 128, 256};
    std::vector<int> head_widths{256, 64, 4};

    int descriptor_dim() const { return point_mlp_widths.back(); }
    int num_classes() const { return head_widths.back(); }

    void validate() const {
        if (point_mlp_widths.size() < 2 || point_mlp_widths.front() != 3)
            throw parameter_error("encoder point MLP must start at width 3");
        if (head_widths.size() < 2 || head_widths.front() != descriptor_dim())
            throw parameter_error("head input width must equal descriptor dim");
    }
};

inline std::string layer_name(const std::string& prefix, const char* block, std::size_t layer,
                              const char* kind) {
    return prefix + "/" + block + "/l" + std::to_string(layer) + "/" + kind;
}

// Student encoder+classifier plus the EMA teacher encoder. Teacher tensors
// are created with requires_grad=false and never enter the optimizer.
template <typename Real>
struct DualEncoder {
    ParameterStore<Real> params;
    EncoderConfig cfg;
    Real ema_momentum = static_cast<Real>(0.995);
};

namespace detail {

template <typename Real>
void add_mlp(ParameterStore<Real>& store, const std::string& prefix, const char* block,
             const std::vector<int>& widths, Rng& rng, bool trainable) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Tensor<Real> w = glorot_init<Real>(widths[l], widths[l + 1], rng);
        if (!trainable) w = detach(w);
        store.add(layer_name(prefix, block, l, "W"), std::move(w));
        store.add(layer_name(prefix, block, l, "b"),
                  Tensor<Real>(1, widths[l + 1],
                               std::vector<Real>(static_cast<std::size_t>(widths[l + 1]), Real(0)),
                               trainable));
    }
}

}  // namespace detail

template <typename Real>
DualEncoder<Real> make_dual_encoder(const EncoderConfig& cfg, Rng& rng, Real ema_momentum) {
    cfg.validate();
    DualEncoder<Real> dual;
    dual.cfg = cfg;
    dual.ema_momentum = ema_momentum;
    detail::add_mlp(dual.params, "student", "enc", cfg.point_mlp_widths, rng, true);
    detail::add_mlp(dual.params, "student", "head", cfg.head_widths, rng, true);
    // teacher starts as an exact copy of the student encoder
    for (std::size_t l = 0; l + 1 < cfg.point_mlp_widths.size(); ++l) {
        for (const char* kind : {"W", "b"}) {
            const auto& src = dual.params.at(layer_name("student", "enc", l, kind));
            dual.params.add(layer_name("teacher", "enc", l, kind), detach(src));
        }
    }
    return dual;
}

// Per-point MLP + max pool over points: x -> g (1 x D). Exactly
// permutation- and duplicate-invariant by construction.
template <typename Real>
Tensor<Real> encode(const ParameterStore<Real>& params, const std::string& prefix,
                    const EncoderConfig& cfg, const PointCloud& pc) {
    const std::size_t n = pc.size();
    if (n == 0) throw dimension_error("encode: empty point cloud");
    std::vector<Real> coords(n * 3);
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Real>(pc.xyz[i]);
    Tensor<Real> h(static_cast<int>(n), 3, std::move(coords));
    const std::size_t layers = cfg.point_mlp_widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        h = add_rowvec(matmul(h, params.at(layer_name(prefix, "enc", l, "W"))),
                       params.at(layer_name(prefix, "enc", l, "b")));
        if (l + 1 < layers) h = relu(h);
    }
    return column_max_pool(h);
}

template <typename Real>
Tensor<Real> head_logits(const ParameterStore<Real>& params, const EncoderConfig& cfg,
                         const Tensor<Real>& g) {
    if (g.cols() != cfg.descriptor_dim())
        throw dimension_error("head_logits: descriptor width " + std::to_string(g.cols()) +
                              " != " + std::to_string(cfg.descriptor_dim()));
    Tensor<Real> h = g;
    const std::size_t layers = cfg.head_widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        h = add_rowvec(matmul(h, params.at(layer_name("student", "head", l, "W"))),
                       params.at(layer_name("student", "head", l, "b")));
        if (l + 1 < layers) h = relu(h);
    }
    return h;
}

// Omega = softmax(head(g)) at temperature 1; row-stochastic output.
template <typename Real>
Tensor<Real> classify(const ParameterStore<Real>& params, const EncoderConfig& cfg,
                      const Tensor<Real>& g) {
    return row_softmax(head_logits(params, cfg, g), Real(1));
}

// Argmax with ties to the lowest index.
template <typename Real>
int predict_label(const Tensor<Real>& p) {
    int best = 0;
    for (int j = 1; j < p.cols(); ++j)
        if (p.data()[j] > p.data()[best]) best = j;
    return best;
}

// teacher <- m * teacher + (1 - m) * student, per encoder element.
template <typename Real>
void ema_update(DualEncoder<Real>& dual) {
    const Real m = dual.ema_momentum;
    for (std::size_t l = 0; l + 1 < dual.cfg.point_mlp_widths.size(); ++l) {
        for (const char* kind : {"W", "b"}) {
            auto& t = dual.params.at(layer_name("teacher", "enc", l, kind));
            const auto& s = dual.params.at(layer_name("student", "enc", l, kind));
            if (t.rows() != s.rows() || t.cols() != s.cols())
                throw state_error("ema_update: teacher/student shape mismatch at layer " +
                                  std::to_string(l));
            for (std::size_t i = 0; i < t.size(); ++i)
                t.data()[i] = m * t.data()[i] + (Real(1) - m) * s.data()[i];
        }
    }
}

}  // namespace sduda
