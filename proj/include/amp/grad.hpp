#pragma once

#include "amp/head.hpp"

#include <functional>
#include <vector>

namespace amp {

/// Analytic gradients of the smooth loss terms with respect to every
/// parameter group. The l1 sparsity term is intentionally absent: the
/// proximal update applies it directly, never through this bundle.
struct GradientBundle {
    std::vector<Matrix> basis;    // per class, D x K: ambient dL/dU_c
    std::vector<Vector> capacity; // per class, K: dL/dsigma_c
    Matrix features;              // D x L: dL/dF

    static GradientBundle zeros(const std::vector<ClassSubspace>& subspaces,
                                int locations);
    GradientBundle& add_scaled(double a, const GradientBundle& other);
    bool all_finite() const;
};

/// Cross-entropy gradient. The max-pooling in the logits routes the full
/// gradient to the recorded argmax location of each (class, direction).
GradientBundle backward_ce(const FeatureTensor& f, int label,
                           const std::vector<ClassSubspace>& subspaces);

/// Spatial entropy gradient; touches only the ground-truth class, whose
/// active set is treated as a fixed discrete selection.
GradientBundle backward_sem(const FeatureTensor& f, int label,
                            const std::vector<ClassSubspace>& subspaces);

/// Pairwise overlap gradient; ground-truth class only, zero when fewer than
/// two directions are active.
GradientBundle backward_overlap(const FeatureTensor& f, int label,
                                const std::vector<ClassSubspace>& subspaces);

/// ce + gamma1 * sem + gamma2 * overlap, as the exact weighted sum of the
/// per-term bundles.
GradientBundle backward_total(const FeatureTensor& f, int label,
                              const std::vector<ClassSubspace>& subspaces,
                              const LossWeights& weights);

/// Central-difference check of an analytic gradient. Per-coordinate step is
/// epsilon * (1 + |x_i|); the reported value is the max per-coordinate
/// difference relative to the gradient scale,
/// max(|analytic|_inf, |numeric|_inf, 1e-8).
/// Throws NonFinite if any probe evaluates to NaN/Inf.
double finite_diff_check(const std::function<double(const Vector&)>& f,
                         const Vector& point, const Vector& analytic_grad,
                         double epsilon);

} // namespace amp
