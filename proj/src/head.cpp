#include "amp/head.hpp"

#include <cmath>
#include <utility>

namespace amp {

ClassSubspace::ClassSubspace(StiefelPoint b, Vector c)
    : basis(std::move(b)), capacity(std::move(c)) {
    if (capacity.size() != basis.cols())
        throw BadShape("ClassSubspace: capacity length must equal basis columns");
    if (!capacity.allFinite())
        throw NonFinite("ClassSubspace: non-finite capacity");
    if ((capacity.array() < 0.0).any())
        throw InvariantViolation("ClassSubspace: negative capacity");
}

std::vector<SubspaceView> views(const std::vector<ClassSubspace>& subspaces) {
    std::vector<SubspaceView> v;
    v.reserve(subspaces.size());
    for (const ClassSubspace& sub : subspaces)
        v.push_back(view(sub));
    return v;
}

double projection_energy(const Vector& f, const SubspaceView& sub) {
    if (f.size() != sub.basis->rows())
        throw BadShape("projection_energy: feature dimension mismatch");
    const Vector a = sub.basis->transpose() * f;
    return (sub.capacity->array() * a.array().square()).sum();
}

double projection_energy(const Vector& f, const ClassSubspace& sub) {
    return projection_energy(f, view(sub));
}

ResponseMap response_map(const FeatureTensor& f, const SubspaceView& sub, bool weighted) {
    if (f.depth != sub.basis->rows())
        throw BadShape("response_map: feature depth mismatch");
    ResponseMap m;
    m.height = f.height;
    m.width = f.width;
    m.energy = (sub.basis->transpose() * f.values).array().square().matrix();
    if (weighted)
        m.energy = sub.capacity->asDiagonal() * m.energy;
    return m;
}

ResponseMap response_map(const FeatureTensor& f, const ClassSubspace& sub, bool weighted) {
    return response_map(f, view(sub), weighted);
}

Vector spatial_softmax(const Vector& m) {
    if (!m.allFinite())
        throw NonFinite("spatial_softmax: non-finite response");
    const double shift = m.maxCoeff();
    const Vector e = (m.array() - shift).exp().matrix();
    return e / e.sum();
}

SpatialDistribution spatial_softmax(const ResponseMap& m) {
    SpatialDistribution d;
    d.height = m.height;
    d.width = m.width;
    d.p.resize(m.energy.rows(), m.energy.cols());
    for (Eigen::Index k = 0; k < m.energy.rows(); ++k)
        d.p.row(k) = spatial_softmax(m.energy.row(k).transpose()).transpose();
    return d;
}

namespace {

// -sum p ln p with the p -> 0 limit handled (term -> 0).
double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
    double h = 0.0;
    for (Eigen::Index l = 0; l < p.size(); ++l)
        if (p(l) > 0.0)
            h -= p(l) * std::log(p(l));
    return h;
}

} // namespace

double sem_loss(const SpatialDistribution& p, const ActiveSet& act) {
    if (act.rank() < 1)
        return 0.0;
    double sum = 0.0;
    for (int k : act.indices)
        sum += entropy(p.p.row(k));
    return sum / act.rank();
}

double overlap_loss(const SpatialDistribution& p, const ActiveSet& act) {
    const int r = act.rank();
    if (r < 2)
        return 0.0;
    double sum = 0.0;
    for (int i = 0; i < r; ++i) {
        for (int j = i + 1; j < r; ++j) {
            const auto pk = p.p.row(act.indices[i]);
            const auto pj = p.p.row(act.indices[j]);
            sum += 2.0 * pk.dot(pj) / (pk.norm() * pj.norm());
        }
    }
    return sum / (static_cast<double>(r) * (r - 1));
}

LogitRecord class_logits(const FeatureTensor& f, const std::vector<SubspaceView>& subspaces) {
    if (subspaces.empty())
        throw BadShape("class_logits: no subspaces");
    const int classes = static_cast<int>(subspaces.size());
    LogitRecord rec;
    rec.logits.resize(classes);
    rec.argmax.resize(classes);
    rec.pooled.resize(classes);

    for (int c = 0; c < classes; ++c) {
        const SubspaceView& sub = subspaces[c];
        if (f.depth != sub.basis->rows())
            throw BadShape("class_logits: feature depth mismatch");
        const Matrix energy =
            (sub.basis->transpose() * f.values).array().square().matrix();
        const int k = static_cast<int>(sub.basis->cols());
        rec.argmax[c].resize(k);
        rec.pooled[c].resize(k);
        for (int d = 0; d < k; ++d) {
            // Explicit scan: ties must resolve to the lowest linear index.
            int best = 0;
            double best_val = energy(d, 0);
            for (Eigen::Index l = 1; l < energy.cols(); ++l) {
                if (energy(d, l) > best_val) {
                    best_val = energy(d, l);
                    best = static_cast<int>(l);
                }
            }
            rec.argmax[c](d) = best;
            rec.pooled[c](d) = best_val;
        }
        rec.logits(c) = (sub.capacity->array() * rec.pooled[c].array()).sum();
    }
    return rec;
}

LogitRecord class_logits(const FeatureTensor& f, const std::vector<ClassSubspace>& subspaces) {
    return class_logits(f, views(subspaces));
}

Vector softmax(const Vector& z) {
    const double shift = z.maxCoeff();
    const Vector e = (z.array() - shift).exp().matrix();
    return e / e.sum();
}

double cross_entropy(const Vector& logits, int label) {
    if (label < 0 || label >= logits.size())
        throw BadLabel("cross_entropy: label out of range");
    const double shift = logits.maxCoeff();
    const double lse = std::log((logits.array() - shift).exp().sum());
    return lse - (logits(label) - shift);
}

LossBreakdown total_loss(const FeatureTensor& f, int label,
                         const std::vector<SubspaceView>& subspaces,
                         const LossWeights& weights) {
    if (label < 0 || label >= static_cast<int>(subspaces.size()))
        throw BadLabel("total_loss: label out of range");

    const LogitRecord rec = class_logits(f, subspaces);

    LossBreakdown out;
    out.logits = rec.logits;
    out.ce = cross_entropy(rec.logits, label);

    const ActiveSet act = active_set(*subspaces[label].capacity);
    const SpatialDistribution dist =
        spatial_softmax(response_map(f, subspaces[label], false));
    out.sem = sem_loss(dist, act);
    out.overlap = overlap_loss(dist, act);

    out.sparse = 0.0;
    for (const SubspaceView& sub : subspaces)
        out.sparse += sub.capacity->sum();

    out.total = out.ce + weights.gamma1 * out.sem + weights.gamma2 * out.overlap +
                weights.lambda * out.sparse;

    int best = 0;
    for (Eigen::Index c = 1; c < rec.logits.size(); ++c)
        if (rec.logits(c) > rec.logits(best))
            best = static_cast<int>(c);
    out.predicted_class = best;
    return out;
}

LossBreakdown total_loss(const FeatureTensor& f, int label,
                         const std::vector<ClassSubspace>& subspaces,
                         const LossWeights& weights) {
    return total_loss(f, label, views(subspaces), weights);
}

} // namespace amp
