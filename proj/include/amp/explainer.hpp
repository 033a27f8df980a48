#pragma once

#include "amp/dataset.hpp"
#include "amp/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amp {

/// Training patch grounding a basis direction: sample index within the
/// cached dataset, grid location, and the energy achieved there.
struct PatchReference {
    int sample = -1;
    int h = -1;
    int w = -1;
    double energy = 0.0;
};

/// One active direction's evidence: weighted energy heatmap, its peak, the
/// contribution at the peak, and the nearest training patch.
struct PartEvidence {
    int direction = -1;
    double capacity = 0.0;
    Matrix heatmap; // H x W, weighted energies
    int peak_h = -1;
    int peak_w = -1;
    double contribution = 0.0;
    PatchReference patch;
    std::string heatmap_file; // name used by the JSON/PGM exporters
};

struct Explanation {
    int predicted_class = -1;
    double total_evidence = 0.0;
    std::vector<PartEvidence> parts;
};

/// Per-class training features computed with a frozen backbone. The
/// fingerprint ties the cache to the exact model state it was built from.
struct FeatureCache {
    std::vector<std::vector<std::pair<int, FeatureTensor>>> by_class;
    std::uint64_t fingerprint = 0;
};

FeatureCache build_cache(const ModelState& state, const Dataset& data);

/// Full interpretable inference for one raw input: prediction, one heatmap
/// per active direction of the predicted class, peak localization,
/// additive evidence contributions, and nearest-patch grounding.
/// `forced_class` >= 0 explains that class instead of the prediction.
/// Throws StaleCache if the cache does not match the state.
Explanation explain(const FeatureTensor& raw, const ModelState& state,
                    const FeatureCache& cache, int forced_class = -1);

/// Exhaustive scan over cached class features for the patch maximizing
/// (U_kᵀ F_hw)^2; ties to the lowest (sample, location).
PatchReference nearest_patch(int direction, int cls, const ModelState& state,
                             const FeatureCache& cache);

/// Binary PGM (P5, maxval 255), min-max normalized; a constant map exports
/// as all zeros.
void export_heatmap_pgm(const Matrix& map, const std::string& path);

/// JSON schema:
/// {predicted_class, total_evidence, parts: [{direction, capacity,
///  peak: [h, w], contribution, patch: {sample, h, w}, heatmap_file}]}
/// Numbers carry 17 significant digits; key order is fixed.
void export_explanation_json(const Explanation& expl, const std::string& path);

} // namespace amp
