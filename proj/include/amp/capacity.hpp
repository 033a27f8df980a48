#pragma once

#include "amp/types.hpp"

#include <vector>

namespace amp {

/// Floor applied to a protected index instead of zero, so a class always
/// keeps at least one live direction.
constexpr double kProtectedFloor = 1e-6;

/// Basis indices with sigma_k > 0 (strict), in increasing order.
struct ActiveSet {
    std::vector<int> indices;
    int rank() const { return static_cast<int>(indices.size()); }
};

/// All-ones capacity vector (initial state: unit evidence gains).
Vector unit_capacity(int k);

ActiveSet active_set(const Vector& sigma);

/// One proximal update, elementwise:
///   sigma' = max(sigma - lr*grad - lr*lambda, 0)
/// The max produces exact zeros, which is what makes the active set a
/// genuine discrete selection. If protected_index >= 0, that component is
/// floored at kProtectedFloor instead of 0.
Vector prox_step(const Vector& sigma, const Vector& grad, double lr, double lambda,
                 int protected_index = -1);

} // namespace amp
