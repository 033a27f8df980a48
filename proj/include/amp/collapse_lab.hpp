#pragma once

#include "amp/backbone.hpp"
#include "amp/dataset.hpp"
#include "amp/trainer.hpp"

#include <cstdint>
#include <vector>

namespace amp {

/// Generator spec for part-structured synthetic data.
///
/// The 64-bit seed has two components: the high 32 bits seed the planted
/// part directions (the class structure), the low 32 bits seed placement
/// and noise. Varying only the low half produces fresh samples of the same
/// classes (train/test splits); varying the high half produces a fresh
/// problem instance. make_seed builds such a seed explicitly.
struct SyntheticSpec {
    int classes = 10;
    int channels = 24;
    int height = 6;
    int width = 6;
    int parts = 3;       // planted parts per class
    double part_scale = 3.0;
    double noise = 0.1;  // tau; background noise is tau/10
    int samples_per_class = 40;
    std::uint64_t seed = 0;

    void validate() const;
};

inline std::uint64_t make_seed(std::uint32_t structure, std::uint32_t noise) {
    return (static_cast<std::uint64_t>(structure) << 32) | noise;
}

/// Per-class orthonormal part directions, channels x parts each.
/// Deterministic in the structure component of spec.seed only.
std::vector<Matrix> planted_directions(const SyntheticSpec& spec);

/// Each sample places every part vector (scaled, plus tau noise) at a
/// random distinct grid location; all other locations carry i.i.d. noise
/// at tau/10.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Unconstrained per-class prototype vectors: the collapse-prone baseline.
struct EuclideanPrototypes {
    std::vector<Matrix> per_class; // C matrices, depth x K
};

/// Pooled similarity scores S_{c,k} = max_l -||F_l - p_{c,k}||^2 with the
/// argmax locations recorded (ties to the lowest linear index).
struct BaselineScores {
    Matrix scores;        // C x K
    Eigen::MatrixXi argmax; // C x K linear locations
};
BaselineScores baseline_forward(const FeatureTensor& f, const EuclideanPrototypes& protos);

/// Baseline classifier: backbone + free prototypes + linear layer over the
/// pooled scores.
struct BaselineModel {
    BackboneParams backbone;
    EuclideanPrototypes protos;
    Matrix classifier;      // C x (C*K), score index c*K + k
    Vector classifier_bias; // C
    std::int64_t step = 0;
    int epoch = 0;

    int classes() const { return static_cast<int>(classifier.rows()); }
    int directions() const {
        return protos.per_class.empty() ? 0
                                        : static_cast<int>(protos.per_class[0].cols());
    }
};

BaselineModel init_baseline(int classes, int depth, int channels, int k,
                            std::uint64_t seed);

/// Warm start: every prototype becomes a uniformly drawn training patch of
/// its class (embedded with the model's current backbone).
void init_prototypes_from_patches(BaselineModel& model, const Dataset& data,
                                  std::uint64_t seed);

Vector baseline_logits(const BaselineScores& scores, const BaselineModel& model);

/// Plain SGD epoch over CE of the baseline logits; same schedule shape as
/// the main trainer.
struct BaselineEpochReport {
    double mean_ce = 0.0;
    double accuracy = 0.0;
};
BaselineEpochReport train_baseline_epoch(BaselineModel& model, const Dataset& data,
                                         const TrainingConfig& cfg);

double baseline_accuracy(const BaselineModel& model, const Dataset& data);

/// Replace every prototype by the nearest training patch of its class
/// (exhaustive search; ties to the lowest (sample, location)).
EuclideanPrototypes project_prototypes(const EuclideanPrototypes& protos,
                                       const Dataset& data,
                                       const BackboneParams& backbone);

/// ||P||_F^2 / sigma_max(P)^2, clamped to [1, K] against roundoff.
double stable_rank(const Matrix& p);

/// Mean pairwise cosine similarity between prototype columns (signed);
/// near 1 means the columns have collapsed onto one direction.
double mean_pairwise_cosine(const Matrix& p);

struct NCMetrics {
    std::vector<Vector> class_means;
    double within_trace = 0.0;  // tr of the pooled within-class covariance
    double etf_deviation = 0.0; // max pair |cos(centered means) + 1/(C-1)|
    std::vector<double> prototype_stable_ranks; // filled by callers
};

/// features_by_class[c] holds the class-c population of feature vectors
/// (every spatial location of every sample). Requires >= 2 classes and
/// >= 2 vectors per class.
NCMetrics nc_metrics(const std::vector<std::vector<Vector>>& features_by_class);

struct CollapseEpochRow {
    int epoch = 0;
    double baseline_ce = 0.0;
    double baseline_accuracy = 0.0;
    double min_stable_rank = 0.0;
    double mean_stable_rank = 0.0;
    double mean_cosine = 0.0; // mean over classes of mean pairwise cosine
    double within_trace = 0.0;
    double etf_deviation = 0.0;
    double amp_mean_rank = 0.0;
    double amp_residual = 0.0;
};

struct CollapseReport {
    std::vector<CollapseEpochRow> rows;
    std::vector<double> final_stable_ranks;  // baseline, per class
    std::vector<double> final_cosines;       // baseline, per class
    double final_within_trace = 0.0;
    double final_etf_deviation = 0.0;
    double baseline_accuracy = 0.0;
    std::vector<int> final_amp_ranks;
    double final_amp_residual = 0.0;
    double amp_accuracy = 0.0;
};

/// Trains the Euclidean baseline and an AMP model on identical data and
/// seed, recording collapse diagnostics per epoch. The AMP run uses
/// lambda = 0 so the contrast isolates the geometric constraint.
CollapseReport collapse_demo(const SyntheticSpec& spec, int epochs, int k);

} // namespace amp
