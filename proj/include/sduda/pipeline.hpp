#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sduda/dataset.hpp"
#include "sduda/distill.hpp"
#include "sduda/graph_refine.hpp"
#include "sduda/network.hpp"
#include "sduda/optim.hpp"

namespace sduda {

// Disjoint partition of target pseudo-labels into confident and
// non-confident sets; every sample is always in exactly one of the two.
struct PseudoLabelState {
    std::vector<int> label;
    std::vector<std::uint8_t> confident;
    std::vector<int> last_round;

    std::size_t size() const { return label.size(); }
    std::size_t confident_count() const {
        std::size_t c = 0;
        for (auto f : confident) c += f;
        return c;
    }
};

struct TrainSchedule {
    int step1_epochs = 60;
    int rounds = 5;
    int epochs_per_round = 20;
    double theta_start = 0.2;
    double theta_end = 1.0;
    double lambda_nonconfident = 0.2;

    // Linear, non-decreasing theta over the rounds, ending at theta_end.
    std::vector<double> thetas() const {
        std::vector<double> t(rounds);
        for (int r = 0; r < rounds; ++r) {
            // endpoints exact; interior points can pick up rounding error
            t[r] = (rounds < 2 || r == rounds - 1)
                       ? theta_end
                       : theta_start + (theta_end - theta_start) * r / (rounds - 1);
            t[r] = std::min(1.0, std::max(0.0, t[r]));
        }
        return t;
    }
};

struct PipelineConfig {
    EncoderConfig encoder;
    AugmentConfig aug;
    DistillConfig distill;
    TrainSchedule schedule;
    GcnConfig gcn;
    AdamConfig adam;
    double ema_momentum = 0.995;
    bool epsilon_calibrated = true;
    double epsilon = 0.95;
    double target_degree = 10.0;
    int batch_per_domain = 8;
    std::uint64_t seed = 1;
    bool enable_sd = true;
    bool enable_ref = true;
    bool enable_st = true;
};

struct MetricsLog {
    struct Row {
        int round;
        int epoch;
        std::string split;
        std::string metric;
        double value;
    };
    std::vector<Row> rows;

    void add(int round, int epoch, const std::string& split, const std::string& metric,
             double value) {
        rows.push_back({round, epoch, split, metric, value});
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw format_error("cannot write metrics CSV: " + path);
        os << "round,epoch,split,metric,value\n";
        char buf[64];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%.9g", r.value);
            os << r.round << "," << r.epoch << "," << r.split << "," << r.metric << "," << buf
               << "\n";
        }
    }
};

template <typename Real>
struct RunResult {
    DualEncoder<Real> dual;
    PseudoLabelState pseudo;
    MetricsLog metrics;
    double step1_pseudo_accuracy = 0.0;  // benchmark mode only
    std::vector<std::pair<double, double>> refine_pre_post;  // pseudo acc per round
    double final_target_accuracy = 0.0;
};

// Accuracy of the exported classifier on unaugmented samples.
template <typename Real>
double evaluate_accuracy(const DualEncoder<Real>& dual, const std::vector<Sample>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        Tensor<Real> g = encode(dual.params, "student", dual.cfg, s.pc);
        if (predict_label(classify(dual.params, dual.cfg, g)) == s.label) ++correct;
    }
    return static_cast<double>(correct) / samples.size();
}

template <typename Real>
std::vector<int> predict_labels(const DualEncoder<Real>& dual, const std::vector<Sample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Tensor<Real> g = encode(dual.params, "student", dual.cfg, s.pc);
        out.push_back(predict_label(classify(dual.params, dual.cfg, g)));
    }
    return out;
}

// y_hat_t = argmax Omega(x_t) for each unaugmented target sample; all
// samples start in the non-confident set.
template <typename Real>
PseudoLabelState init_pseudo_labels(const DualEncoder<Real>& dual,
                                    const std::vector<Sample>& tgt) {
    PseudoLabelState state;
    state.label = predict_labels(dual, tgt);
    state.confident.assign(tgt.size(), 0);
    state.last_round.assign(tgt.size(), 0);
    return state;
}

namespace detail {

template <typename Real>
Tensor<Real> onehot_row(int label, int k) {
    std::vector<Real> v(static_cast<std::size_t>(k), Real(0));
    v[static_cast<std::size_t>(label)] = Real(1);
    return Tensor<Real>(1, k, std::move(v));
}

struct EpochStats {
    double loss_ce_src = 0;
    double loss_ce_tgt = 0;
    double loss_sd = 0;
    double descriptor_variance = 0;
};

template <typename Real>
class VarianceMonitor {
public:
    void observe(const Tensor<Real>& desc) {
        if (sum_.empty()) {
            sum_.assign(desc.size(), 0.0);
            sumsq_.assign(desc.size(), 0.0);
        }
        for (std::size_t i = 0; i < desc.size(); ++i) {
            const double v = static_cast<double>(desc.data()[i]);
            sum_[i] += v;
            sumsq_[i] += v * v;
        }
        ++count_;
    }
    // Mean over descriptor dimensions of the across-sample variance.
    double variance() const {
        if (count_ < 2 || sum_.empty()) return 0.0;
        double total = 0;
        for (std::size_t i = 0; i < sum_.size(); ++i) {
            const double mean = sum_[i] / count_;
            total += std::max(0.0, sumsq_[i] / count_ - mean * mean);
        }
        return total / static_cast<double>(sum_.size());
    }

private:
    std::vector<double> sum_, sumsq_;
    long long count_ = 0;
};

// One optimization epoch shared by step 1 and the self-training rounds.
// `pl_state == nullptr` selects step-1 behaviour (no target CE).
template <typename Real>
EpochStats train_epoch(DualEncoder<Real>& dual, AdamState<Real>& opt_state,
                       const PipelineConfig& cfg, const std::vector<Sample>& src,
                       const std::vector<Sample>& tgt, const PseudoLabelState* pl_state,
                       const Rng& epoch_rng) {
    const int k = cfg.encoder.num_classes();
    const int b = cfg.batch_per_domain;
    std::vector<int> src_order(src.size()), tgt_order(tgt.size());
    std::iota(src_order.begin(), src_order.end(), 0);
    std::iota(tgt_order.begin(), tgt_order.end(), 0);
    Rng shuffle_rng = epoch_rng.derive(0);
    shuffle_rng.shuffle(src_order);
    shuffle_rng.shuffle(tgt_order);

    const std::size_t steps = (src.size() + b - 1) / b;
    EpochStats stats;
    VarianceMonitor<Real> var_monitor;
    std::size_t tgt_cursor = 0;

    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<const PointCloud*> batch_src, batch_tgt;
        std::vector<int> src_labels, tgt_ids;
        for (int i = 0; i < b && step * b + i < src.size(); ++i) {
            const int idx = src_order[step * b + i];
            batch_src.push_back(&src[idx].pc);
            src_labels.push_back(src[idx].label);
        }
        for (std::size_t i = 0; i < batch_src.size(); ++i) {
            const int idx = tgt_order[tgt_cursor++ % tgt_order.size()];
            batch_tgt.push_back(&tgt[idx].pc);
            tgt_ids.push_back(idx);
        }

        Rng batch_rng = epoch_rng.derive(1, step);
        Tensor<Real> loss = Tensor<Real>::scalar(Real(0));
        std::vector<Tensor<Real>> src_desc;
        std::vector<PointCloud> tgt_weak;

        if (cfg.enable_sd) {
            DistillBatch<Real> db =
                distill_step(dual, batch_src, batch_tgt, cfg.aug, cfg.distill, batch_rng);
            Tensor<Real> sd =
                scale(add(db.loss_src, db.loss_tgt), Real(0.5));
            loss = add(loss, sd);
            stats.loss_sd += static_cast<double>(sd.item());
            src_desc = std::move(db.src_student_desc);
            tgt_weak = std::move(db.tgt_weak);
            for (const auto& g : src_desc) var_monitor.observe(g);
            for (const auto& g : db.tgt_student_desc) var_monitor.observe(g);
        } else {
            // same augmentation streams as distill_step would use
            for (std::size_t i = 0; i < batch_src.size(); ++i) {
                Rng r = batch_rng.derive(0, i, 0);
                PointCloud strong = f_strong(*batch_src[i], cfg.aug, r);
                src_desc.push_back(encode(dual.params, "student", dual.cfg, strong));
                var_monitor.observe(src_desc.back());
            }
            if (pl_state) {
                for (std::size_t i = 0; i < batch_tgt.size(); ++i) {
                    Rng r = batch_rng.derive(1, i, 1);
                    tgt_weak.push_back(f_weak(*batch_tgt[i], cfg.aug, r));
                }
            }
        }

        // source cross-entropy on strongly augmented samples
        Tensor<Real> ce_src = Tensor<Real>::scalar(Real(0));
        for (std::size_t i = 0; i < src_desc.size(); ++i) {
            Tensor<Real> p = classify(dual.params, dual.cfg, src_desc[i]);
            ce_src = add(ce_src, cross_entropy(onehot_row<Real>(src_labels[i], k), p));
        }
        ce_src = scale(ce_src, Real(1) / static_cast<Real>(src_desc.size()));
        loss = add(loss, ce_src);
        stats.loss_ce_src += static_cast<double>(ce_src.item());

        // lambda-weighted target cross-entropy on weakly augmented samples
        if (pl_state) {
            Tensor<Real> ce_tgt = Tensor<Real>::scalar(Real(0));
            for (std::size_t i = 0; i < batch_tgt.size(); ++i) {
                const int idx = tgt_ids[i];
                const Real lambda = pl_state->confident[idx]
                                        ? Real(1)
                                        : static_cast<Real>(cfg.schedule.lambda_nonconfident);
                Tensor<Real> g = encode(dual.params, "student", dual.cfg, tgt_weak[i]);
                Tensor<Real> p = classify(dual.params, dual.cfg, g);
                Tensor<Real> ce = cross_entropy(onehot_row<Real>(pl_state->label[idx], k), p);
                ce_tgt = add(ce_tgt, scale(ce, lambda));
            }
            ce_tgt = scale(ce_tgt, Real(1) / static_cast<Real>(batch_tgt.size()));
            loss = add(loss, ce_tgt);
            stats.loss_ce_tgt += static_cast<double>(ce_tgt.item());
        }

        dual.params.zero_grad();
        backward(loss);
        adam_step(dual.params, opt_state, cfg.adam);
        if (cfg.enable_sd) ema_update(dual);
    }

    stats.loss_ce_src /= static_cast<double>(steps);
    stats.loss_ce_tgt /= static_cast<double>(steps);
    stats.loss_sd /= static_cast<double>(steps);
    stats.descriptor_variance = var_monitor.variance();
    return stats;
}

// Benchmark-mode pseudo-label accuracy against ground truth.
inline double pseudo_accuracy(const PseudoLabelState& state, const std::vector<Sample>& tgt) {
    if (state.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < state.size(); ++i)
        if (state.label[i] == tgt[i].label) ++correct;
    return static_cast<double>(correct) / state.size();
}

template <typename Real>
void log_epoch(MetricsLog& log, int round, int epoch, const EpochStats& stats,
               const DualEncoder<Real>& dual, const std::vector<Sample>& src,
               const std::vector<Sample>& tgt_test, double pseudo_acc, bool benchmark_mode) {
    log.add(round, epoch, "source_train", "accuracy", evaluate_accuracy(dual, src));
    log.add(round, epoch, "source_train", "loss_ce_src", stats.loss_ce_src);
    log.add(round, epoch, "source_train", "loss_sd", stats.loss_sd);
    log.add(round, epoch, "source_train", "descriptor_variance", stats.descriptor_variance);
    log.add(round, epoch, "target_test", "accuracy", evaluate_accuracy(dual, tgt_test));
    log.add(round, epoch, "pseudo", "loss_ce_tgt", stats.loss_ce_tgt);
    if (benchmark_mode) log.add(round, epoch, "pseudo", "accuracy", pseudo_acc);
}

}  // namespace detail

// Step 1: augmented source classification plus self-distillation on both
// domains; optimizer step then EMA update, per batch.
template <typename Real>
void step1_train(DualEncoder<Real>& dual, const PipelineConfig& cfg,
                 const std::vector<Sample>& src, const std::vector<Sample>& tgt,
                 const std::vector<Sample>& tgt_test, MetricsLog& log, bool benchmark_mode) {
    if (src.empty() || tgt.empty()) throw parameter_error("step1_train: empty dataset");
    AdamState<Real> opt_state;
    Rng root(cfg.seed, 1);
    for (int epoch = 0; epoch < cfg.schedule.step1_epochs; ++epoch) {
        Rng epoch_rng = root.derive(static_cast<std::uint64_t>(epoch));
        auto stats = detail::train_epoch(dual, opt_state, cfg, src, tgt, nullptr, epoch_rng);
        double pacc = 0.0;
        if (benchmark_mode) {
            // accuracy the pseudo-labels would have if initialized now
            auto preds = predict_labels(dual, tgt);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < tgt.size(); ++i)
                if (preds[i] == tgt[i].label) ++correct;
            pacc = static_cast<double>(correct) / tgt.size();
        }
        detail::log_epoch(log, 0, epoch, stats, dual, src, tgt_test, pacc, benchmark_mode);
    }
}

// One self-training round: e epochs of Eq.-5-style training with the
// current pseudo-label partition fixed.
template <typename Real>
void selftrain_round(DualEncoder<Real>& dual, AdamState<Real>& opt_state,
                     const PipelineConfig& cfg, const std::vector<Sample>& src,
                     const std::vector<Sample>& tgt, const std::vector<Sample>& tgt_test,
                     const PseudoLabelState& pl_state, int round_idx, MetricsLog& log,
                     bool benchmark_mode) {
    if (pl_state.size() != tgt.size())
        throw state_error("selftrain_round: pseudo-label state does not cover the target set");
    Rng root(cfg.seed, 2);
    for (int epoch = 0; epoch < cfg.schedule.epochs_per_round; ++epoch) {
        Rng epoch_rng = root.derive(static_cast<std::uint64_t>(round_idx),
                                    static_cast<std::uint64_t>(epoch));
        auto stats = detail::train_epoch(dual, opt_state, cfg, src, tgt, &pl_state, epoch_rng);
        detail::log_epoch(log, round_idx + 1, epoch, stats, dual, src, tgt_test,
                          detail::pseudo_accuracy(pl_state, tgt), benchmark_mode);
    }
}

// (b)+(c): embed the whole target set, build the graph, train the GCN on
// all current pseudo-labels and promote the top-theta nodes per class.
template <typename Real>
void refine_round(const DualEncoder<Real>& dual, const PipelineConfig& cfg,
                  const std::vector<Sample>& tgt, PseudoLabelState& pl_state, double theta,
                  int round_idx, Rng& rng) {
    const int n = static_cast<int>(tgt.size());
    const int d = dual.cfg.descriptor_dim();
    const int k = dual.cfg.num_classes();
    std::vector<Real> emb(static_cast<std::size_t>(n) * d);
    std::vector<Real> pred(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
        Tensor<Real> g = encode(dual.params, "student", dual.cfg, tgt[i].pc);
        Tensor<Real> p = classify(dual.params, dual.cfg, g);
        std::copy(g.data().begin(), g.data().end(), emb.begin() + static_cast<std::size_t>(i) * d);
        std::copy(p.data().begin(), p.data().end(), pred.begin() + static_cast<std::size_t>(i) * k);
    }
    Tensor<Real> embeddings(n, d, std::move(emb));
    Tensor<Real> predictions(n, k, std::move(pred));

    double eps = cfg.epsilon;
    if (cfg.epsilon_calibrated) eps = calibrate_epsilon(embeddings, cfg.target_degree).epsilon;
    TargetGraph<Real> graph = build_graph(embeddings, predictions, eps);

    Rng gcn_rng = rng.derive(static_cast<std::uint64_t>(round_idx));
    GcnModel<Real> model = train_gcn(graph, pl_state.label, cfg.gcn, k, gcn_rng);
    SelectResult<Real> sel = select_confident(model, graph, theta);
    for (int i : sel.selected) {
        pl_state.label[i] = sel.gcn_label[i];
        pl_state.confident[i] = 1;
        pl_state.last_round[i] = round_idx;
    }
}

// Full two-step pipeline. The returned DualEncoder still carries teacher
// parameters; export_inference_params() strips them for deployment.
template <typename Real>
RunResult<Real> run_full(const PipelineConfig& cfg, const std::vector<Sample>& src,
                         const std::vector<Sample>& tgt, const std::vector<Sample>& tgt_test,
                         bool benchmark_mode = true) {
    if (src.empty() || tgt.empty()) throw parameter_error("run_full: empty dataset");
    cfg.encoder.validate();
    cfg.distill.validate();
    RunResult<Real> result;

    Rng init_rng = Rng(cfg.seed, 0);
    result.dual = make_dual_encoder<Real>(cfg.encoder, init_rng,
                                          static_cast<Real>(cfg.ema_momentum));
    step1_train(result.dual, cfg, src, tgt, tgt_test, result.metrics, benchmark_mode);
    result.pseudo = init_pseudo_labels(result.dual, tgt);
    result.step1_pseudo_accuracy = detail::pseudo_accuracy(result.pseudo, tgt);

    if (cfg.enable_st) {
        // self-training restarts the student (and its teacher copy) from scratch
        Rng restart_rng = Rng(cfg.seed, 3);
        result.dual = make_dual_encoder<Real>(cfg.encoder, restart_rng,
                                              static_cast<Real>(cfg.ema_momentum));
        AdamState<Real> opt_state;
        Rng refine_rng = Rng(cfg.seed, 4);
        const auto thetas = cfg.schedule.thetas();
        for (int r = 0; r < cfg.schedule.rounds; ++r) {
            selftrain_round(result.dual, opt_state, cfg, src, tgt, tgt_test, result.pseudo, r,
                            result.metrics, benchmark_mode);
            if (cfg.enable_ref) {
                const double pre = detail::pseudo_accuracy(result.pseudo, tgt);
                refine_round(result.dual, cfg, tgt, result.pseudo, thetas[r], r, refine_rng);
                const double post = detail::pseudo_accuracy(result.pseudo, tgt);
                result.refine_pre_post.emplace_back(pre, post);
            }
        }
    }
    result.final_target_accuracy = evaluate_accuracy(result.dual, tgt_test);
    return result;
}

// Inference checkpoint contract: student Phi and Psi only; the teacher and
// the GCN are dropped.
template <typename Real>
ParameterStore<Real> export_inference_params(const DualEncoder<Real>& dual) {
    ParameterStore<Real> out;
    for (const auto& [name, t] : dual.params.params)
        if (name.rfind("student/", 0) == 0) out.add(name, detach(t));
    return out;
}

}  // namespace sduda
