#pragma once

#include "amp/feature.hpp"

#include <string>
#include <vector>

namespace amp {

struct Sample {
    FeatureTensor raw; // channels x H x W
    int label = 0;     // zero-based in memory; stored one-based on disk
};

struct Dataset {
    int classes = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<Sample> samples;

    int size() const { return static_cast<int>(samples.size()); }
};

/// AMPD container: magic "AMPD", u32 version=1, u32 dims (N, C, D_in, H, W),
/// u32 labels[N] (one-based), then per sample H*W*D_in float32
/// little-endian values, location-major with the channel index fastest.
/// The writer pads nothing; the reader validates the byte length exactly.
void write_ampd(const Dataset& data, const std::string& path);
Dataset read_ampd(const std::string& path);

} // namespace amp
