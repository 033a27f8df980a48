#pragma once

#include "amp/backbone.hpp"
#include "amp/dataset.hpp"
#include "amp/grad.hpp"
#include "amp/head.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace amp {

struct TrainingConfig {
    int epochs = 60;
    int batch_size = 32;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    int k = 10; // directions per class
    LossWeights weights;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // epochs; 0 disables periodic checkpoints

    // Diagnostic hook: >= 0 replaces the schedule with a constant rate
    // (0 freezes all parameter updates bit-for-bit). Negative = off.
    double lr_override = -1.0;

    void validate() const;
};

struct ModelState {
    BackboneParams backbone;
    std::vector<ClassSubspace> subspaces;
    std::int64_t step = 0;
    int epoch = 0;

    int classes() const { return static_cast<int>(subspaces.size()); }
    int depth() const { return static_cast<int>(backbone.weight.rows()); }
    int channels() const { return static_cast<int>(backbone.weight.cols()); }
};

struct EpochReport {
    LossBreakdown mean_loss; // logits/predicted_class unused in the mean
    double accuracy = 0.0;
    std::vector<int> active_ranks; // per class
    double max_residual = 0.0;     // max over classes of ||UᵀU - I||_F
};

/// Cosine-annealed learning rate:
/// lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi t / T)) / 2.
double cosine_lr(std::int64_t t, std::int64_t total, double lr_max, double lr_min);

/// Fresh model: uniform backbone, per-class random Stiefel basis seeded
/// seed + class index, unit capacities.
ModelState init_model(int classes, int depth, int channels, const TrainingConfig& cfg);

/// One epoch of the decoupled update loop: per batch, mean gradients over
/// samples, then a Euclidean step on the backbone, a Riemannian step per
/// class basis, and a proximal step per class capacity. Numeric failure
/// rolls the state back to the epoch start and rethrows.
EpochReport train_epoch(ModelState& state, const Dataset& data, const TrainingConfig& cfg);

/// Full run; invokes `on_epoch` (when set) after each epoch.
std::vector<EpochReport> train(
    ModelState& state, const Dataset& data, const TrainingConfig& cfg,
    const std::function<void(const ModelState&, const EpochReport&)>& on_epoch = {});

struct EvalResult {
    double accuracy = 0.0;
    LossBreakdown mean_loss;
};

EvalResult evaluate(const ModelState& state, const Dataset& data, const LossWeights& weights);

/// AMPC checkpoint: magic "AMPC", u32 version=1, u32 dims (C, D, D_in, K),
/// then little-endian f64 arrays: backbone W (column-major), b, per class
/// U_c (column-major) and sigma_c, then a u64 FNV-1a checksum of all prior
/// bytes. load validates magic, version, shapes, checksum, and the manifold
/// and capacity invariants.
std::vector<unsigned char> checkpoint_bytes(const ModelState& state);
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

} // namespace amp
