#pragma once

#include "amp/capacity.hpp"
#include "amp/feature.hpp"
#include "amp/stiefel.hpp"

#include <vector>

namespace amp {

/// Orthonormal basis plus nonnegative per-direction gains for one class.
struct ClassSubspace {
    StiefelPoint basis;
    Vector capacity;

    ClassSubspace(StiefelPoint b, Vector c);

    int ambient_dim() const { return basis.rows(); }
    int directions() const { return basis.cols(); }
};

/// Unvalidated view used by the low-level evaluation path. The forward
/// formulas are well-defined for any basis matrix; the ClassSubspace
/// overloads add the manifold guarantee on top. The gradient checker
/// probes this path at (slightly) off-manifold points.
struct SubspaceView {
    const Matrix* basis;    // D x K
    const Vector* capacity; // K
};

inline SubspaceView view(const ClassSubspace& sub) {
    return {&sub.basis.basis(), &sub.capacity};
}
std::vector<SubspaceView> views(const std::vector<ClassSubspace>& subspaces);

struct LossWeights {
    double gamma1 = 0.01; // spatial entropy weight
    double gamma2 = 0.01; // overlap weight
    double lambda = 1e-4; // sparsity weight
};

struct LossBreakdown {
    double ce = 0.0;
    double sem = 0.0;
    double overlap = 0.0;
    double sparse = 0.0;
    double total = 0.0;
    Vector logits;
    int predicted_class = -1;
};

/// Per-direction squared responses; row k is direction k's H x W grid,
/// flattened row-major. All entries >= 0.
struct ResponseMap {
    int height = 0;
    int width = 0;
    Matrix energy; // K x L
};

/// Per-direction spatial probability maps; each row sums to 1.
struct SpatialDistribution {
    int height = 0;
    int width = 0;
    Matrix p; // K x L
};

/// Weighted projection energy E = sum_k sigma_k (U_kᵀ f)^2.
double projection_energy(const Vector& f, const SubspaceView& sub);
double projection_energy(const Vector& f, const ClassSubspace& sub);

/// M_{k,l} = (U_kᵀ F_l)^2, scaled by sigma_k when `weighted`. The unweighted
/// variant feeds the regularizers, the weighted one feeds explanations.
ResponseMap response_map(const FeatureTensor& f, const SubspaceView& sub, bool weighted);
ResponseMap response_map(const FeatureTensor& f, const ClassSubspace& sub, bool weighted);

/// Max-shifted softmax over one flattened grid; always sums to 1.
Vector spatial_softmax(const Vector& m);

/// Row-wise spatial softmax of a response map.
SpatialDistribution spatial_softmax(const ResponseMap& m);

/// Mean spatial entropy over active directions, in [0, ln(H*W)].
/// Returns 0 for an empty active set.
double sem_loss(const SpatialDistribution& p, const ActiveSet& act);

/// Mean pairwise cosine similarity over ordered active pairs, in [0, 1].
/// Returns 0 when fewer than two directions are active.
double overlap_loss(const SpatialDistribution& p, const ActiveSet& act);

/// Class logits z_c = sum_k sigma_{c,k} max_l (U_{c,k}ᵀ F_l)^2, with the
/// per-direction argmax locations and unweighted pooled energies recorded
/// for reuse by gradients and explanations. Argmax ties resolve to the
/// lowest linear (row-major) location.
struct LogitRecord {
    Vector logits;                       // C
    std::vector<Eigen::VectorXi> argmax; // per class: K linear locations
    std::vector<Vector> pooled;          // per class: K max unweighted energies
};
LogitRecord class_logits(const FeatureTensor& f, const std::vector<SubspaceView>& subspaces);
LogitRecord class_logits(const FeatureTensor& f, const std::vector<ClassSubspace>& subspaces);

/// Max-shifted softmax of a logit vector.
Vector softmax(const Vector& z);

/// -ln softmax(logits)[label], computed via log-sum-exp.
double cross_entropy(const Vector& logits, int label);

/// Composite objective. CE uses all classes; the spatial regularizers are
/// evaluated on the ground-truth class's active set only; sparse is the
/// plain sum of all capacities.
LossBreakdown total_loss(const FeatureTensor& f, int label,
                         const std::vector<SubspaceView>& subspaces,
                         const LossWeights& weights);
LossBreakdown total_loss(const FeatureTensor& f, int label,
                         const std::vector<ClassSubspace>& subspaces,
                         const LossWeights& weights);

} // namespace amp
