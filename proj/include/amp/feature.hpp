#pragma once

#include "amp/types.hpp"

namespace amp {

/// Spatial grid of feature (or raw input) vectors. One column per location,
/// locations ordered row-major: l = h * width + w. `values` is
/// depth x (height * width), so per-location access is a column view.
struct FeatureTensor {
    int depth = 0;
    int height = 0;
    int width = 0;
    Matrix values;

    FeatureTensor() = default;
    FeatureTensor(int d, int h, int w)
        : depth(d), height(h), width(w), values(Matrix::Zero(d, h * w)) {}

    int locations() const { return height * width; }
    int loc(int h, int w) const { return h * width + w; }
};

} // namespace amp
