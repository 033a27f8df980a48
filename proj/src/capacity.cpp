#include "amp/capacity.hpp"

#include <algorithm>
#include <cmath>

namespace amp {

Vector unit_capacity(int k) {
    if (k < 1)
        throw BadShape("unit_capacity: need K >= 1");
    return Vector::Ones(k);
}

ActiveSet active_set(const Vector& sigma) {
    ActiveSet act;
    for (Eigen::Index k = 0; k < sigma.size(); ++k)
        if (sigma(k) > 0.0)
            act.indices.push_back(static_cast<int>(k));
    return act;
}

Vector prox_step(const Vector& sigma, const Vector& grad, double lr, double lambda,
                 int protected_index) {
    if (sigma.size() != grad.size())
        throw BadShape("prox_step: sigma/grad size mismatch");
    if (lr < 0.0 || lambda < 0.0 || !std::isfinite(lr) || !std::isfinite(lambda))
        throw Error("prox_step: lr must be >= 0 and lambda >= 0");

    // Scalar loop on purpose: the update must be bit-reproducible against a
    // scalar re-implementation, so no vectorized expression rewriting here.
    Vector out(sigma.size());
    for (Eigen::Index k = 0; k < sigma.size(); ++k) {
        const double stepped = sigma(k) - lr * grad(k) - lr * lambda;
        const double floor = (static_cast<int>(k) == protected_index) ? kProtectedFloor : 0.0;
        out(k) = std::max(stepped, floor);
    }
    if (!out.allFinite())
        throw NonFinite("prox_step: non-finite result");
    return out;
}

} // namespace amp
