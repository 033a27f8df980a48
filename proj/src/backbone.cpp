#include "amp/backbone.hpp"

#include "amp/rng.hpp"

#include <cmath>

namespace amp {

BackboneParams init_backbone(int depth, int channels, std::uint64_t seed) {
    if (depth < 1 || channels < 1)
        throw BadShape("init_backbone: need depth >= 1 and channels >= 1");
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    BackboneParams p;
    p.weight.resize(depth, channels);
    for (int i = 0; i < depth; ++i)
        for (int j = 0; j < channels; ++j)
            p.weight(i, j) = rng.uniform(-bound, bound);
    p.bias = Vector::Zero(depth);
    return p;
}

FeatureTensor embed(const FeatureTensor& raw, const BackboneParams& params) {
    if (raw.depth != params.weight.cols())
        throw BadShape("embed: channel count mismatch");
    FeatureTensor f;
    f.depth = static_cast<int>(params.weight.rows());
    f.height = raw.height;
    f.width = raw.width;
    f.values = (params.weight * raw.values).colwise() + params.bias;
    return f;
}

BackboneGradients embed_backward(const Matrix& upstream, const FeatureTensor& raw,
                                 const BackboneParams& params) {
    if (upstream.rows() != params.weight.rows() || upstream.cols() != raw.values.cols() ||
        raw.depth != params.weight.cols())
        throw BadShape("embed_backward: shape mismatch");
    BackboneGradients g;
    g.weight = upstream * raw.values.transpose();
    g.bias = upstream.rowwise().sum();
    g.raw = params.weight.transpose() * upstream;
    return g;
}

} // namespace amp
