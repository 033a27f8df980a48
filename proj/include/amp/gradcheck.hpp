#pragma once

#include "amp/grad.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amp {

/// One (term, parameter group) check outcome.
struct GradCheckEntry {
    std::string term;  // "ce" | "sem" | "overlap" | "total"
    std::string group; // "basis" | "capacity" | "features" | "backbone"
    double max_error = 0.0;
};

struct GradCheckResult {
    std::vector<GradCheckEntry> entries;
    double max_error = 0.0;
    int states = 0;
};

/// Finite-difference oracle over seeded random model states at small fixed
/// dimensions. Every loss term (and the composite) is checked against
/// central differences with respect to the bases, the capacities, the
/// features, and the backbone parameters. States whose max-pooling margin
/// is too small for a clean derivative are resampled.
GradCheckResult run_gradient_oracle(std::uint64_t seed, int states);

} // namespace amp
