#pragma once

#include <utility>
#include <vector>

#include "sduda/network.hpp"
#include "sduda/pointcloud.hpp"
#include "sduda/tensor.hpp"

namespace sduda {

enum class LossSpace {
    feature,  // self-distillation over descriptors (default)
    output,   // knowledge-distillation baseline over classifier logits
};

struct DistillConfig {
    double tau_student = 0.5;
    double tau_teacher = 0.5;
    LossSpace loss_space = LossSpace::feature;

    void validate() const {
        if (!(tau_student > 0) || !(tau_teacher > 0))
            throw parameter_error("distill temperatures must be positive");
    }
};

// Tempered softmax pair (q, q~). The teacher side is detached, so no
// gradient ever reaches it.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> tempered_distributions(const Tensor<Real>& g_student,
                                                             const Tensor<Real>& g_teacher,
                                                             const DistillConfig& cfg) {
    if (g_student.cols() != g_teacher.cols())
        throw dimension_error("tempered_distributions: width mismatch");
    Tensor<Real> q = row_softmax(g_student, static_cast<Real>(cfg.tau_student));
    Tensor<Real> qt = row_softmax(detach(g_teacher), static_cast<Real>(cfg.tau_teacher));
    return {q, qt};
}

// L_sd = -sum_d q~ log q, batch mean over rows.
template <typename Real>
Tensor<Real> sd_loss(const Tensor<Real>& g_teacher, const Tensor<Real>& g_student,
                     const DistillConfig& cfg) {
    auto [q, qt] = tempered_distributions(g_student, g_teacher, cfg);
    return cross_entropy(qt, q);
}

// Per-sample byproducts of a distillation pass, kept so callers can reuse
// the student forward (e.g. for the classification loss) without
// recomputation.
template <typename Real>
struct DistillBatch {
    Tensor<Real> loss_src;  // 1x1, zero tensor if the source batch is empty
    Tensor<Real> loss_tgt;
    std::vector<Tensor<Real>> src_student_desc;  // g = Phi(f''(x_s)), graph-connected
    std::vector<Tensor<Real>> tgt_student_desc;
    std::vector<PointCloud> src_strong;
    std::vector<PointCloud> tgt_weak;
};

namespace detail {

template <typename Real>
Tensor<Real> domain_sd_loss(const DualEncoder<Real>& dual, const std::vector<const PointCloud*>& batch,
                            const AugmentConfig& aug_cfg, const DistillConfig& cfg, Rng& rng,
                            std::uint64_t domain_tag, std::vector<Tensor<Real>>& student_descs,
                            std::vector<PointCloud>* strong_out, std::vector<PointCloud>* weak_out) {
    Tensor<Real> total = Tensor<Real>::scalar(Real(0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng r_strong = rng.derive(domain_tag, i, 0);
        Rng r_weak = rng.derive(domain_tag, i, 1);
        PointCloud strong = f_strong(*batch[i], aug_cfg, r_strong);
        PointCloud weak = f_weak(*batch[i], aug_cfg, r_weak);
        Tensor<Real> g = encode(dual.params, "student", dual.cfg, strong);
        Tensor<Real> gt = encode(dual.params, "teacher", dual.cfg, weak);
        Tensor<Real> a = g, b = gt;
        if (cfg.loss_space == LossSpace::output) {
            a = head_logits(dual.params, dual.cfg, g);
            b = detach(head_logits(dual.params, dual.cfg, gt));
        }
        total = add(total, sd_loss(b, a, cfg));
        student_descs.push_back(g);
        if (strong_out) strong_out->push_back(std::move(strong));
        if (weak_out) weak_out->push_back(std::move(weak));
    }
    if (!batch.empty()) total = scale(total, Real(1) / static_cast<Real>(batch.size()));
    return total;
}

}  // namespace detail

// One distillation pass over a source batch and a target batch: student
// sees strong augmentations, teacher sees weak ones, L_sd accumulated per
// domain as a batch mean. No optimizer step is taken.
template <typename Real>
DistillBatch<Real> distill_step(const DualEncoder<Real>& dual,
                                const std::vector<const PointCloud*>& batch_src,
                                const std::vector<const PointCloud*>& batch_tgt,
                                const AugmentConfig& aug_cfg, const DistillConfig& cfg, Rng& rng) {
    cfg.validate();
    DistillBatch<Real> out;
    out.loss_src = detail::domain_sd_loss(dual, batch_src, aug_cfg, cfg, rng, 0,
                                          out.src_student_desc, &out.src_strong, nullptr);
    out.loss_tgt = detail::domain_sd_loss(dual, batch_tgt, aug_cfg, cfg, rng, 1,
                                          out.tgt_student_desc, nullptr, &out.tgt_weak);
    return out;
}

}  // namespace sduda
