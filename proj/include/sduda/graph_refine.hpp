#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/optim.hpp"
#include "sduda/rng.hpp"
#include "sduda/tensor.hpp"

namespace sduda {

// Cosine-similarity graph over all target samples, with the node features
// needed to assemble the GCN input.
template <typename Real>
struct TargetGraph {
    int n = 0;
    std::vector<std::vector<int>> neighbors;  // sorted, no self loops
    Tensor<Real> embeddings;                  // n x D, constant
    Tensor<Real> predictions;                 // n x K, constant, row-stochastic
    double epsilon = 0.95;

    int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
    double mean_degree() const {
        long long total = 0;
        for (const auto& nb : neighbors) total += static_cast<long long>(nb.size());
        return n > 0 ? static_cast<double>(total) / n : 0.0;
    }
};

struct GcnConfig {
    int hidden1 = 128;
    int hidden2 = 64;
    double mask_frac = 0.2;
    int epochs = 100;
    double lr = 1e-2;
};

// Three propagation layers plus the K->D projection of the prediction
// input; retrained from scratch every refinement round.
template <typename Real>
struct GcnModel {
    ParameterStore<Real> params;
    GcnConfig cfg;
    int descriptor_dim = 0;
    int num_classes = 0;
};

// A_ij = 1 iff cos(g_i, g_j) > epsilon, i != j.
template <typename Real>
TargetGraph<Real> build_graph(const Tensor<Real>& embeddings, const Tensor<Real>& predictions,
                              double epsilon) {
    const int n = embeddings.rows();
    const int d = embeddings.cols();
    if (predictions.rows() != n) throw dimension_error("build_graph: row count mismatch");
    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) {
            const double v = embeddings.at(i, j);
            s += v * v;
        }
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw numeric_error("build_graph: zero-norm embedding at node " + std::to_string(i));
    }
    TargetGraph<Real> g;
    g.n = n;
    g.epsilon = epsilon;
    g.neighbors.resize(n);
    for (int i = 0; i < n; ++i) {
        const Real* gi = embeddings.data().data() + static_cast<std::size_t>(i) * d;
        for (int j = i + 1; j < n; ++j) {
            const Real* gj = embeddings.data().data() + static_cast<std::size_t>(j) * d;
            double dot = 0;
            for (int k = 0; k < d; ++k) dot += static_cast<double>(gi[k]) * gj[k];
            if (dot / (norms[i] * norms[j]) > epsilon) {
                g.neighbors[i].push_back(j);
                g.neighbors[j].push_back(i);
            }
        }
    }
    g.embeddings = detach(embeddings);
    g.predictions = detach(predictions);
    return g;
}

struct EpsilonCalibration {
    double epsilon = 0.95;
    double achieved_degree = 0.0;
    bool unreachable = false;
};

// Bisection on epsilon until the mean node degree lands within +-20% of
// the target, or 30 iterations elapse.
template <typename Real>
EpsilonCalibration calibrate_epsilon(const Tensor<Real>& embeddings, double target_degree) {
    if (target_degree < 1) throw parameter_error("calibrate_epsilon: target_degree must be >= 1");
    Tensor<Real> dummy_pred = Tensor<Real>::zeros(embeddings.rows(), 1);
    double lo = -1.0, hi = 1.0;
    EpsilonCalibration result;
    for (int iter = 0; iter < 30; ++iter) {
        const double eps = 0.5 * (lo + hi);
        const double deg = build_graph(embeddings, dummy_pred, eps).mean_degree();
        result.epsilon = eps;
        result.achieved_degree = deg;
        if (std::abs(deg - target_degree) <= 0.2 * target_degree) return result;
        if (deg > target_degree)
            lo = eps;  // degree shrinks as epsilon rises
        else
            hi = eps;
    }
    result.unreachable = std::abs(result.achieved_degree - target_degree) > 0.2 * target_degree;
    return result;
}

template <typename Real>
GcnModel<Real> make_gcn(int descriptor_dim, int num_classes, const GcnConfig& cfg, Rng& rng) {
    GcnModel<Real> m;
    m.cfg = cfg;
    m.descriptor_dim = descriptor_dim;
    m.num_classes = num_classes;
    m.params.add("gcn/W0", glorot_init<Real>(descriptor_dim, cfg.hidden1, rng));
    m.params.add("gcn/W1", glorot_init<Real>(cfg.hidden1, cfg.hidden2, rng));
    m.params.add("gcn/W2", glorot_init<Real>(cfg.hidden2, num_classes, rng));
    m.params.add("gcn/WD", glorot_init<Real>(num_classes, descriptor_dim, rng));
    return m;
}

// H(0) = G + P W_D, with exactly floor(mask_frac * n) prediction rows
// zeroed before projection during training.
template <typename Real>
Tensor<Real> node_inputs(const TargetGraph<Real>& graph, const GcnModel<Real>& model,
                         Rng& mask_rng, bool training) {
    Tensor<Real> p = graph.predictions;
    if (training) {
        const int k = static_cast<int>(model.cfg.mask_frac * graph.n);
        std::vector<int> idx(graph.n);
        std::iota(idx.begin(), idx.end(), 0);
        mask_rng.shuffle(idx);
        std::vector<Real> masked = p.data();
        const int cols = p.cols();
        for (int i = 0; i < k; ++i)
            std::fill_n(masked.begin() + static_cast<std::size_t>(idx[i]) * cols, cols, Real(0));
        p = Tensor<Real>(p.rows(), cols, std::move(masked));
    }
    return add(graph.embeddings, matmul(p, model.params.at("gcn/WD")));
}

namespace detail {

// Symmetrically normalized adjacency with self loops, as per-row
// (neighbor, coefficient) lists. Symmetric, so it is its own transpose.
template <typename Real>
struct NormAdjacency {
    std::vector<std::vector<std::pair<int, Real>>> rows;
};

template <typename Real>
std::shared_ptr<NormAdjacency<Real>> normalized_adjacency(const TargetGraph<Real>& graph) {
    auto s = std::make_shared<NormAdjacency<Real>>();
    s->rows.resize(graph.n);
    std::vector<double> dinv(graph.n);
    for (int i = 0; i < graph.n; ++i) dinv[i] = 1.0 / std::sqrt(1.0 + graph.degree(i));
    for (int i = 0; i < graph.n; ++i) {
        auto& row = s->rows[i];
        row.reserve(graph.degree(i) + 1);
        bool self_done = false;
        for (int j : graph.neighbors[i]) {
            if (!self_done && j > i) {
                row.emplace_back(i, static_cast<Real>(dinv[i] * dinv[i]));
                self_done = true;
            }
            row.emplace_back(j, static_cast<Real>(dinv[i] * dinv[j]));
        }
        if (!self_done) row.emplace_back(i, static_cast<Real>(dinv[i] * dinv[i]));
    }
    return s;
}

// Sparse propagate S * H as an autodiff op; S is symmetric so the backward
// pass reuses the same structure.
template <typename Real>
Tensor<Real> spmm(const std::shared_ptr<NormAdjacency<Real>>& s, const Tensor<Real>& h) {
    const int n = h.rows(), d = h.cols();
    std::vector<Real> out(static_cast<std::size_t>(n) * d, Real(0));
    for (int i = 0; i < n; ++i) {
        Real* orow = out.data() + static_cast<std::size_t>(i) * d;
        for (const auto& [j, w] : s->rows[i]) {
            const Real* hrow = h.data().data() + static_cast<std::size_t>(j) * d;
            for (int k = 0; k < d; ++k) orow[k] += w * hrow[k];
        }
    }
    auto node = sduda::detail::make_result<Real>(n, d, std::move(out), {h.node()});
    if (node->requires_grad) {
        auto ph = h.node();
        node->backprop = [ph, s, n, d](const TensorNode<Real>& self) {
            ph->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real* grow = self.grad.data() + static_cast<std::size_t>(i) * d;
                for (const auto& [j, w] : s->rows[i]) {
                    Real* hrow = ph->grad.data() + static_cast<std::size_t>(j) * d;
                    for (int k = 0; k < d; ++k) hrow[k] += w * grow[k];
                }
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

}  // namespace detail

// Three GCN layers per Eq. H(l+1) = sigma(S H(l) W(l)); ReLU after the
// first two, raw logits from the last.
template <typename Real>
Tensor<Real> gcn_forward(const TargetGraph<Real>& graph, const GcnModel<Real>& model,
                         const Tensor<Real>& h0) {
    auto s = detail::normalized_adjacency(graph);
    Tensor<Real> h = relu(detail::spmm(s, matmul(h0, model.params.at("gcn/W0"))));
    h = relu(detail::spmm(s, matmul(h, model.params.at("gcn/W1"))));
    return detail::spmm(s, matmul(h, model.params.at("gcn/W2")));
}

// Full-graph training with a plain cross-entropy over all pseudo-labels,
// masking active. Model weights come out deterministic for a fixed rng.
template <typename Real>
GcnModel<Real> train_gcn(const TargetGraph<Real>& graph, const std::vector<int>& pseudo_labels,
                         const GcnConfig& cfg, int num_classes, Rng& rng) {
    if (static_cast<int>(pseudo_labels.size()) != graph.n)
        throw state_error("train_gcn: every node needs a pseudo-label (" +
                          std::to_string(pseudo_labels.size()) + " labels for " +
                          std::to_string(graph.n) + " nodes)");
    for (int i = 0; i < graph.n; ++i)
        if (pseudo_labels[i] < 0 || pseudo_labels[i] >= num_classes)
            throw state_error("train_gcn: unlabeled or out-of-range node " + std::to_string(i));

    Rng init_rng = rng.derive(0);
    GcnModel<Real> model = make_gcn<Real>(graph.embeddings.cols(), num_classes, cfg, init_rng);
    std::vector<Real> onehot(static_cast<std::size_t>(graph.n) * num_classes, Real(0));
    for (int i = 0; i < graph.n; ++i)
        onehot[static_cast<std::size_t>(i) * num_classes + pseudo_labels[i]] = Real(1);
    Tensor<Real> targets(graph.n, num_classes, std::move(onehot));

    AdamState<Real> opt_state;
    AdamConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng mask_rng = rng.derive(1, static_cast<std::uint64_t>(epoch));
        Tensor<Real> h0 = node_inputs(graph, model, mask_rng, /*training=*/true);
        Tensor<Real> logits = gcn_forward(graph, model, h0);
        Tensor<Real> loss = cross_entropy(targets, row_softmax(logits, Real(1)));
        model.params.zero_grad();
        backward(loss);
        adam_step(model.params, opt_state, opt_cfg);
    }
    return model;
}

template <typename Real>
struct SelectResult {
    std::vector<int> gcn_label;        // argmax of the GCN output, per node
    std::vector<double> confidence;    // max softmax entry, per node
    std::vector<int> selected;         // nodes promoted to the confident set
};

// Inference pass (no masking) followed by per-class top-theta selection.
template <typename Real>
SelectResult<Real> select_confident(const GcnModel<Real>& model, const TargetGraph<Real>& graph,
                                    double theta) {
    if (theta < 0 || theta > 1) throw parameter_error("select_confident: theta must be in [0,1]");
    Rng unused(0);
    Tensor<Real> h0 = node_inputs(graph, model, unused, /*training=*/false);
    Tensor<Real> probs = row_softmax(gcn_forward(graph, model, h0), Real(1));

    SelectResult<Real> res;
    res.gcn_label.resize(graph.n);
    res.confidence.resize(graph.n);
    std::vector<std::vector<int>> by_class(model.num_classes);
    for (int i = 0; i < graph.n; ++i) {
        int best = 0;
        for (int j = 1; j < model.num_classes; ++j)
            if (probs.at(i, j) > probs.at(i, best)) best = j;
        res.gcn_label[i] = best;
        res.confidence[i] = static_cast<double>(probs.at(i, best));
        by_class[best].push_back(i);
    }
    for (auto& nodes : by_class) {
        std::stable_sort(nodes.begin(), nodes.end(), [&](int a, int b) {
            return res.confidence[a] > res.confidence[b];
        });
        const std::size_t take = static_cast<std::size_t>(theta * nodes.size());
        for (std::size_t i = 0; i < take; ++i) res.selected.push_back(nodes[i]);
    }
    std::sort(res.selected.begin(), res.selected.end());
    return res;
}

// Diagnostic edge dump: header "nodes=<n> eps=<eps>" then "i<TAB>j" per
// undirected edge.
template <typename Real>
void dump_graph(const TargetGraph<Real>& graph, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw format_error("cannot open graph dump for writing: " + path);
    os << "nodes=" << graph.n << " eps=" << graph.epsilon << "\n";
    for (int i = 0; i < graph.n; ++i)
        for (int j : graph.neighbors[i])
            if (j > i) os << i << "\t" << j << "\n";
}

}  // namespace sduda
