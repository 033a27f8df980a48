#include "amp/stiefel.hpp"

#include "amp/rng.hpp"

#include <Eigen/QR>

#include <cmath>
#include <utility>

namespace amp {

QrFactors qr_factor(const Matrix& a) {
    const Eigen::Index rows = a.rows();
    const Eigen::Index cols = a.cols();
    if (cols < 1 || rows < cols)
        throw BadShape("qr_factor: need D >= K >= 1");
    if (!a.allFinite())
        throw NonFinite("qr_factor: input has non-finite entries");

    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    Matrix r = qr.matrixQR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();

    for (Eigen::Index k = 0; k < cols; ++k) {
        if (std::abs(r(k, k)) <= 1e-12)
            throw RankDeficient("qr_factor: rank-deficient input (|R_kk| <= 1e-12)");
        if (r(k, k) < 0.0) {
            q.col(k) = -q.col(k);
            r.row(k) = -r.row(k);
        }
    }
    return {std::move(q), std::move(r)};
}

double orthonormality_residual(const Matrix& u) {
    const Eigen::Index k = u.cols();
    return (u.transpose() * u - Matrix::Identity(k, k)).norm();
}

StiefelPoint::StiefelPoint(Matrix basis) : basis_(std::move(basis)) {
    if (basis_.cols() < 1 || basis_.rows() < basis_.cols())
        throw BadShape("StiefelPoint: need D >= K >= 1");
    if (!basis_.allFinite())
        throw NonFinite("StiefelPoint: non-finite basis");
    if (orthonormality_residual(basis_) > 1e-8)
        throw InvariantViolation("StiefelPoint: columns not orthonormal (residual > 1e-8)");
}

StiefelPoint random_stiefel(int d, int k, std::uint64_t seed) {
    if (k < 1 || k > d)
        throw BadShape("random_stiefel: need D >= K >= 1");
    Rng rng(seed);
    Matrix g(d, k);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j)
            g(i, j) = rng.normal();
    return StiefelPoint(qr_factor(g).q);
}

Matrix tangent_project(const StiefelPoint& u, const Matrix& g) {
    const Matrix& b = u.basis();
    if (g.rows() != b.rows() || g.cols() != b.cols())
        throw BadShape("tangent_project: gradient shape mismatch");
    const Matrix utg = b.transpose() * g;
    return g - b * (0.5 * (utg + utg.transpose()));
}

StiefelPoint retract(const StiefelPoint& u, const Matrix& xi) {
    const Matrix& b = u.basis();
    if (xi.rows() != b.rows() || xi.cols() != b.cols())
        throw BadShape("retract: tangent shape mismatch");
    return StiefelPoint(qr_factor(b + xi).q);
}

StiefelPoint rsgd_step(const StiefelPoint& u, const Matrix& ambient_grad, double lr) {
    if (lr < 0.0)
        throw Error("rsgd_step: negative learning rate");
    return retract(u, (-lr) * tangent_project(u, ambient_grad));
}

} // namespace amp
