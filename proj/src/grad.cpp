#include "amp/grad.hpp"

#include <cmath>

namespace amp {

GradientBundle GradientBundle::zeros(const std::vector<ClassSubspace>& subspaces,
                                     int locations) {
    GradientBundle b;
    b.basis.reserve(subspaces.size());
    b.capacity.reserve(subspaces.size());
    for (const ClassSubspace& sub : subspaces) {
        b.basis.push_back(Matrix::Zero(sub.ambient_dim(), sub.directions()));
        b.capacity.push_back(Vector::Zero(sub.directions()));
    }
    b.features = Matrix::Zero(subspaces.empty() ? 0 : subspaces[0].ambient_dim(), locations);
    return b;
}

GradientBundle& GradientBundle::add_scaled(double a, const GradientBundle& other) {
    for (std::size_t c = 0; c < basis.size(); ++c) {
        basis[c] += a * other.basis[c];
        capacity[c] += a * other.capacity[c];
    }
    features += a * other.features;
    return *this;
}

bool GradientBundle::all_finite() const {
    for (std::size_t c = 0; c < basis.size(); ++c)
        if (!basis[c].allFinite() || !capacity[c].allFinite())
            return false;
    return features.allFinite();
}

GradientBundle backward_ce(const FeatureTensor& f, int label,
                           const std::vector<ClassSubspace>& subspaces) {
    if (label < 0 || label >= static_cast<int>(subspaces.size()))
        throw BadLabel("backward_ce: label out of range");

    const LogitRecord rec = class_logits(f, subspaces);
    const Vector p = softmax(rec.logits);

    GradientBundle b = GradientBundle::zeros(subspaces, f.locations());
    for (int c = 0; c < static_cast<int>(subspaces.size()); ++c) {
        const double dz = p(c) - (c == label ? 1.0 : 0.0);
        const ClassSubspace& sub = subspaces[c];
        b.capacity[c] = dz * rec.pooled[c];
        for (int k = 0; k < sub.directions(); ++k) {
            const int l = rec.argmax[c](k);
            const auto u_k = sub.basis.basis().col(k);
            const auto f_l = f.values.col(l);
            const double a = u_k.dot(f_l);
            const double scale = dz * sub.capacity(k) * 2.0 * a;
            b.basis[c].col(k) = scale * f_l;
            b.features.col(l) += scale * u_k;
        }
    }
    return b;
}

namespace {

// Shared machinery for the two spatial regularizers: both differentiate a
// scalar of the per-direction softmax maps P_k back to U and F through
// M = (U_kᵀ F)^2. Given dL/dP rows, chains through softmax and the square.
GradientBundle spatial_backward(const FeatureTensor& f, int label,
                                const std::vector<ClassSubspace>& subspaces,
                                const ActiveSet& act, const Matrix& responses,
                                const SpatialDistribution& dist, const Matrix& dp) {
    GradientBundle b = GradientBundle::zeros(subspaces, f.locations());
    const ClassSubspace& sub = subspaces[label];
    for (int k : act.indices) {
        const Eigen::RowVectorXd pk = dist.p.row(k);
        const Eigen::RowVectorXd dpk = dp.row(k);
        // Softmax Jacobian: dM = P .* (dP - <P, dP>).
        const double mean = pk.dot(dpk);
        const Eigen::RowVectorXd dm = (pk.array() * (dpk.array() - mean)).matrix();
        // M = a^2  =>  dA = 2 a .* dM.
        const Eigen::RowVectorXd da = (2.0 * responses.row(k).array() * dm.array()).matrix();
        b.basis[label].col(k) = f.values * da.transpose();
        b.features += sub.basis.basis().col(k) * da;
    }
    return b;
}

} // namespace

GradientBundle backward_sem(const FeatureTensor& f, int label,
                            const std::vector<ClassSubspace>& subspaces) {
    if (label < 0 || label >= static_cast<int>(subspaces.size()))
        throw BadLabel("backward_sem: label out of range");
    const ClassSubspace& sub = subspaces[label];
    const ActiveSet act = active_set(sub.capacity);
    if (act.rank() < 1)
        return GradientBundle::zeros(subspaces, f.locations());

    const Matrix responses = sub.basis.basis().transpose() * f.values;
    ResponseMap rm;
    rm.height = f.height;
    rm.width = f.width;
    rm.energy = responses.array().square().matrix();
    const SpatialDistribution dist = spatial_softmax(rm);

    // d(-sum p ln p)/dP_l = -(ln P_l + 1); averaged over active directions.
    Matrix dp = Matrix::Zero(dist.p.rows(), dist.p.cols());
    const double inv_r = 1.0 / act.rank();
    for (int k : act.indices)
        for (Eigen::Index l = 0; l < dist.p.cols(); ++l)
            if (dist.p(k, l) > 0.0)
                dp(k, l) = -inv_r * (std::log(dist.p(k, l)) + 1.0);

    return spatial_backward(f, label, subspaces, act, responses, dist, dp);
}

GradientBundle backward_overlap(const FeatureTensor& f, int label,
                                const std::vector<ClassSubspace>& subspaces) {
    if (label < 0 || label >= static_cast<int>(subspaces.size()))
        throw BadLabel("backward_overlap: label out of range");
    const ClassSubspace& sub = subspaces[label];
    const ActiveSet act = active_set(sub.capacity);
    if (act.rank() < 2)
        return GradientBundle::zeros(subspaces, f.locations());

    const Matrix responses = sub.basis.basis().transpose() * f.values;
    ResponseMap rm;
    rm.height = f.height;
    rm.width = f.width;
    rm.energy = responses.array().square().matrix();
    const SpatialDistribution dist = spatial_softmax(rm);

    const int r = act.rank();
    const double coef = 2.0 / (static_cast<double>(r) * (r - 1));
    Matrix dp = Matrix::Zero(dist.p.rows(), dist.p.cols());
    for (int i = 0; i < r; ++i) {
        for (int j = i + 1; j < r; ++j) {
            const int ki = act.indices[i];
            const int kj = act.indices[j];
            const Eigen::RowVectorXd pi = dist.p.row(ki);
            const Eigen::RowVectorXd pj = dist.p.row(kj);
            const double ni = pi.norm();
            const double nj = pj.norm();
            const Eigen::RowVectorXd ui = pi / ni;
            const Eigen::RowVectorXd uj = pj / nj;
            const double cos_ij = ui.dot(uj);
            dp.row(ki) += (coef / ni) * (uj - cos_ij * ui);
            dp.row(kj) += (coef / nj) * (ui - cos_ij * uj);
        }
    }

    return spatial_backward(f, label, subspaces, act, responses, dist, dp);
}

GradientBundle backward_total(const FeatureTensor& f, int label,
                              const std::vector<ClassSubspace>& subspaces,
                              const LossWeights& weights) {
    GradientBundle b = backward_ce(f, label, subspaces);
    b.add_scaled(weights.gamma1, backward_sem(f, label, subspaces));
    b.add_scaled(weights.gamma2, backward_overlap(f, label, subspaces));
    return b;
}

double finite_diff_check(const std::function<double(const Vector&)>& f,
                         const Vector& point, const Vector& analytic_grad,
                         double epsilon) {
    if (analytic_grad.size() != point.size())
        throw BadShape("finite_diff_check: gradient/point size mismatch");
    if (epsilon <= 0.0)
        throw Error("finite_diff_check: epsilon must be positive");

    Vector numeric(point.size());
    Vector probe = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        const double h = epsilon * (1.0 + std::abs(point(i)));
        probe(i) = point(i) + h;
        const double fp = f(probe);
        probe(i) = point(i) - h;
        const double fm = f(probe);
        probe(i) = point(i);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NonFinite("finite_diff_check: probe evaluated to NaN/Inf");
        numeric(i) = (fp - fm) / (2.0 * h);
    }

    // Error relative to the gradient scale. Central differences in double
    // carry an absolute noise floor of a few ulps of f over 2h, so a
    // per-coordinate denominator would flag correct gradients wherever a
    // single coordinate happens to be tiny.
    const double denom = std::max(
        {analytic_grad.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
    return (numeric - analytic_grad).cwiseAbs().maxCoeff() / denom;
}

} // namespace amp
