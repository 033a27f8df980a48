#pragma once

#include "amp/types.hpp"

#include <cstdint>

namespace amp {

struct QrFactors {
    Matrix q; // D x K, orthonormal columns
    Matrix r; // K x K, upper triangular, strictly positive diagonal
};

/// Thin QR factorization (Householder), D >= K, with the sign convention
/// fixed so R has a strictly positive diagonal. The sign fix makes the
/// factorization unique, hence a pure function of its input.
/// Throws RankDeficient when any |R_kk| <= 1e-12.
QrFactors qr_factor(const Matrix& a);

/// Frobenius norm of UᵀU - I_K.
double orthonormality_residual(const Matrix& u);

/// A D x K matrix with orthonormal columns. The constructor validates the
/// invariant (residual <= 1e-8), so holders of a StiefelPoint may assume it.
class StiefelPoint {
public:
    explicit StiefelPoint(Matrix basis);

    const Matrix& basis() const { return basis_; }
    int rows() const { return static_cast<int>(basis_.rows()); }
    int cols() const { return static_cast<int>(basis_.cols()); }

private:
    Matrix basis_;
};

/// QR of an i.i.d. standard Gaussian D x K matrix; deterministic per seed.
StiefelPoint random_stiefel(int d, int k, std::uint64_t seed);

/// Orthogonal projection of an ambient gradient onto the tangent space at U
/// under the embedded Euclidean metric: xi = G - U * sym(UᵀG).
Matrix tangent_project(const StiefelPoint& u, const Matrix& g);

/// QR retraction: the Q factor of U + xi.
StiefelPoint retract(const StiefelPoint& u, const Matrix& xi);

/// One Riemannian SGD step: retract(U, -lr * tangent_project(U, grad)).
StiefelPoint rsgd_step(const StiefelPoint& u, const Matrix& ambient_grad, double lr);

} // namespace amp
