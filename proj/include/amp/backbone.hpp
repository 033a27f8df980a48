#pragma once

#include "amp/feature.hpp"

#include <cstdint>

namespace amp {

/// Per-location affine embedding from input channels to feature depth:
/// F_l = W * raw_l + b. No spatial mixing.
struct BackboneParams {
    Matrix weight; // depth x channels
    Vector bias;   // depth
};

/// Entries i.i.d. uniform in [-1/sqrt(channels), +1/sqrt(channels)], zero bias.
BackboneParams init_backbone(int depth, int channels, std::uint64_t seed);

FeatureTensor embed(const FeatureTensor& raw, const BackboneParams& params);

struct BackboneGradients {
    Matrix weight; // dL/dW
    Vector bias;   // dL/db
    Matrix raw;    // dL/draw, channels x locations
};

/// Standard affine gradients, summed over locations.
BackboneGradients embed_backward(const Matrix& upstream, const FeatureTensor& raw,
                                 const BackboneParams& params);

} // namespace amp
