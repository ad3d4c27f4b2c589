#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "sduda/errors.hpp"

namespace sduda {

// Log clamp floor used by cross_entropy to avoid -inf on saturated softmax.
inline constexpr double kLogFloor = 1e-12;

namespace detail {

// C(m x n) += A(m x k) * B(k x n), row-major. ikj order keeps the inner
// loop contiguous so the compiler can vectorize it.
template <typename Real>
void gemm_nn_acc(int m, int k, int n, const Real* a, const Real* b, Real* c) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<std::size_t>(i) * k;
        Real* crow = c + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const Real av = arow[l];
            if (av == Real(0)) continue;
            const Real* brow = b + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A(m x k) * B(n x k)^T
template <typename Real>
void gemm_nt_acc(int m, int k, int n, const Real* a, const Real* b, Real* c) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<std::size_t>(i) * k;
        Real* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const Real* brow = b + static_cast<std::size_t>(j) * k;
            Real acc = Real(0);
            for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// C(m x n) += A(k x m)^T * B(k x n)
template <typename Real>
void gemm_tn_acc(int m, int k, int n, const Real* a, const Real* b, Real* c) {
    for (int l = 0; l < k; ++l) {
        const Real* arow = a + static_cast<std::size_t>(l) * m;
        const Real* brow = b + static_cast<std::size_t>(l) * n;
        for (int i = 0; i < m; ++i) {
            const Real av = arow[i];
            if (av == Real(0)) continue;
            Real* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

template <typename Real>
struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<Real> value;
    std::vector<Real> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
    }
};

// Dense rank<=2 tensor with reverse-mode differentiation. Copies share the
// underlying node, so Tensor is a cheap handle into the expression graph.
template <typename Real>
class Tensor {
public:
    using Node = TensorNode<Real>;

    Tensor() = default;

    Tensor(int rows, int cols, std::vector<Real> data, bool requires_grad = false) {
        if (rows < 0 || cols < 0 ||
            data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw dimension_error("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        node_ = std::make_shared<Node>();
        node_->rows = rows;
        node_->cols = cols;
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        return Tensor(rows, cols,
                      std::vector<Real>(static_cast<std::size_t>(rows) * cols, Real(0)),
                      requires_grad);
    }

    static Tensor scalar(Real v) { return Tensor(1, 1, {v}); }

    bool valid() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<Real>& data() { return node_->value; }
    const std::vector<Real>& data() const { return node_->value; }
    std::vector<Real>& grad() { return node_->grad; }
    const std::vector<Real>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    Real item() const {
        if (size() != 1) throw dimension_error("item() on non-scalar tensor");
        return node_->value[0];
    }

    Real at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * cols() + c]; }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
    }

    std::shared_ptr<Node> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Real>
std::shared_ptr<TensorNode<Real>> make_result(
    int rows, int cols, std::vector<Real> value,
    std::vector<std::shared_ptr<TensorNode<Real>>> parents) {
    auto n = std::make_shared<TensorNode<Real>>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

}  // namespace detail

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.cols() != b.rows())
        throw dimension_error("matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<Real> out(static_cast<std::size_t>(m) * n, Real(0));
    detail::gemm_nn_acc(m, k, n, a.data().data(), b.data().data(), out.data());
    auto node = detail::make_result<Real>(m, n, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        auto pb = b.node();
        node->backprop = [pa, pb, m, k, n](const TensorNode<Real>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                detail::gemm_nt_acc(m, n, k, self.grad.data(), pb->value.data(), pa->grad.data());
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                detail::gemm_tn_acc(k, m, n, pa->value.data(), self.grad.data(), pb->grad.data());
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
    std::vector<Real> out(x.data());
    for (auto& v : out) v = std::max(v, Real(0));
    auto node = detail::make_result<Real>(x.rows(), x.cols(), std::move(out), {x.node()});
    if (node->requires_grad) {
        auto px = x.node();
        node->backprop = [px](const TensorNode<Real>& self) {
            px->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (px->value[i] > Real(0)) px->grad[i] += self.grad[i];
        };
    }
    return Tensor<Real>::from_node(node);
}

// Elementwise sum; shapes must agree exactly.
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw dimension_error("add shape mismatch: " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " + " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
    std::vector<Real> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    auto node = detail::make_result<Real>(a.rows(), a.cols(), std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        auto pb = b.node();
        node->backprop = [pa, pb](const TensorNode<Real>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

// x (n x d) + row vector b (1 x d) broadcast over rows.
template <typename Real>
Tensor<Real> add_rowvec(const Tensor<Real>& x, const Tensor<Real>& b) {
    if (b.rows() != 1 || b.cols() != x.cols())
        throw dimension_error("add_rowvec expects 1x" + std::to_string(x.cols()) + ", got " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    const int n = x.rows(), d = x.cols();
    std::vector<Real> out(x.data());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] += b.data()[j];
    auto node = detail::make_result<Real>(n, d, std::move(out), {x.node(), b.node()});
    if (node->requires_grad) {
        auto px = x.node();
        auto pb = b.node();
        node->backprop = [px, pb, n, d](const TensorNode<Real>& self) {
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        pb->grad[j] += self.grad[static_cast<std::size_t>(i) * d + j];
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
    std::vector<Real> out(x.data());
    for (auto& v : out) v *= c;
    auto node = detail::make_result<Real>(x.rows(), x.cols(), std::move(out), {x.node()});
    if (node->requires_grad) {
        auto px = x.node();
        node->backprop = [px, c](const TensorNode<Real>& self) {
            px->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += c * self.grad[i];
        };
    }
    return Tensor<Real>::from_node(node);
}

// Value copy detached from the graph; never receives gradient.
template <typename Real>
Tensor<Real> detach(const Tensor<Real>& x) {
    return Tensor<Real>(x.rows(), x.cols(), x.data(), false);
}

// Row-wise tempered softmax with max subtraction for stability.
template <typename Real>
Tensor<Real> row_softmax(const Tensor<Real>& x, Real temperature) {
    if (!(temperature > Real(0)))
        throw parameter_error("row_softmax temperature must be positive, got " +
                              std::to_string(static_cast<double>(temperature)));
    const int m = x.rows(), d = x.cols();
    std::vector<Real> out(static_cast<std::size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
        const Real* row = x.data().data() + static_cast<std::size_t>(i) * d;
        Real* orow = out.data() + static_cast<std::size_t>(i) * d;
        Real mx = row[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        Real sum = Real(0);
        for (int j = 0; j < d; ++j) {
            orow[j] = std::exp((row[j] - mx) / temperature);
            sum += orow[j];
        }
        for (int j = 0; j < d; ++j) orow[j] /= sum;
    }
    auto node = detail::make_result<Real>(m, d, std::move(out), {x.node()});
    if (node->requires_grad) {
        auto px = x.node();
        node->backprop = [px, m, d, temperature](const TensorNode<Real>& self) {
            px->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const Real* q = self.value.data() + static_cast<std::size_t>(i) * d;
                const Real* dq = self.grad.data() + static_cast<std::size_t>(i) * d;
                Real* dx = px->grad.data() + static_cast<std::size_t>(i) * d;
                Real dot = Real(0);
                for (int j = 0; j < d; ++j) dot += dq[j] * q[j];
                for (int j = 0; j < d; ++j) dx[j] += q[j] * (dq[j] - dot) / temperature;
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

// Mean over rows of -sum_d p_target * log(max(p_pred, eps)). Gradient flows
// to p_pred only; p_target is treated as a constant distribution.
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& p_target, const Tensor<Real>& p_pred) {
    if (p_target.rows() != p_pred.rows() || p_target.cols() != p_pred.cols())
        throw dimension_error("cross_entropy shape mismatch");
    const int m = p_pred.rows(), d = p_pred.cols();
    const Real eps = static_cast<Real>(kLogFloor);
    Real total = Real(0);
    for (std::size_t i = 0; i < p_pred.size(); ++i) {
        const Real t = p_target.data()[i];
        const Real p = p_pred.data()[i];
        if (std::isnan(t) || std::isnan(p)) throw numeric_error("cross_entropy: NaN in input");
        total -= t * std::log(std::max(p, eps));
    }
    total /= static_cast<Real>(m);
    auto node = detail::make_result<Real>(1, 1, std::vector<Real>{total},
                                          {p_target.node(), p_pred.node()});
    if (node->requires_grad) {
        auto pt = p_target.node();
        auto pp = p_pred.node();
        node->backprop = [pt, pp, m, eps](const TensorNode<Real>& self) {
            if (!pp->requires_grad) return;
            pp->ensure_grad();
            const Real g = self.grad[0] / static_cast<Real>(m);
            for (std::size_t i = 0; i < pp->value.size(); ++i) {
                // below the clamp the loss is locally constant in p
                if (pp->value[i] <= eps) continue;
                pp->grad[i] -= g * pt->value[i] / pp->value[i];
            }
        };
    }
    return Tensor<Real>::from_node(node);
}

// Per-column max over rows; gradient routed to the first argmax row.
template <typename Real>
Tensor<Real> column_max_pool(const Tensor<Real>& x) {
    const int n = x.rows(), d = x.cols();
    if (n < 1) throw dimension_error("column_max_pool: empty input");
    std::vector<Real> out(x.data().begin(), x.data().begin() + d);
    auto argmax = std::make_shared<std::vector<int>>(d, 0);
    for (int i = 1; i < n; ++i) {
        const Real* row = x.data().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            if (row[j] > out[j]) {
                out[j] = row[j];
                (*argmax)[j] = i;
            }
        }
    }
    auto node = detail::make_result<Real>(1, d, std::move(out), {x.node()});
    if (node->requires_grad) {
        auto px = x.node();
        node->backprop = [px, argmax, d](const TensorNode<Real>& self) {
            px->ensure_grad();
            for (int j = 0; j < d; ++j)
                px->grad[static_cast<std::size_t>((*argmax)[j]) * d + j] += self.grad[j];
        };
    }
    return Tensor<Real>::from_node(node);
}

// Sum of all entries, as a 1x1 tensor.
template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
    Real total = Real(0);
    for (Real v : x.data()) total += v;
    auto node = detail::make_result<Real>(1, 1, std::vector<Real>{total}, {x.node()});
    if (node->requires_grad) {
        auto px = x.node();
        node->backprop = [px](const TensorNode<Real>& self) {
            px->ensure_grad();
            for (auto& g : px->grad) g += self.grad[0];
        };
    }
    return Tensor<Real>::from_node(node);
}

// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
// visits nodes in reverse topological order.
template <typename Real>
void backward(const Tensor<Real>& loss) {
    if (loss.size() != 1) throw dimension_error("backward() requires a scalar loss");
    using NodeT = TensorNode<Real>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    std::vector<std::pair<std::shared_ptr<NodeT>, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            auto p = n->parents[idx++];
            if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n.get());
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

}  // namespace sduda
