#include "amp/trainer.hpp"

#include "amp/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <utility>

namespace amp {

void TrainingConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || k < 1)
        throw BadSpec("TrainingConfig: epochs, batch_size, k must be >= 1");
    if (!(lr_max >= lr_min) || !(lr_min > 0.0))
        throw BadSpec("TrainingConfig: need lr_max >= lr_min > 0");
    if (weights.gamma1 < 0.0 || weights.gamma2 < 0.0 || weights.lambda < 0.0)
        throw BadSpec("TrainingConfig: loss weights must be nonnegative");
    if (checkpoint_every < 0)
        throw BadSpec("TrainingConfig: checkpoint_every must be >= 0");
}

double cosine_lr(std::int64_t t, std::int64_t total, double lr_max, double lr_min) {
    if (total < 1 || t < 0 || t > total)
        throw BadStep("cosine_lr: need 0 <= t <= T, T >= 1");
    const double phase =
        std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

ModelState init_model(int classes, int depth, int channels, const TrainingConfig& cfg) {
    cfg.validate();
    if (classes < 1)
        throw BadSpec("init_model: need at least one class");
    ModelState state;
    state.backbone = init_backbone(depth, channels, mix_seed(cfg.seed));
    state.subspaces.reserve(classes);
    for (int c = 0; c < classes; ++c)
        state.subspaces.emplace_back(
            random_stiefel(depth, cfg.k, cfg.seed + static_cast<std::uint64_t>(c)),
            unit_capacity(cfg.k));
    return state;
}

namespace {

int argmax_index(const Vector& v) {
    int best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best))
            best = static_cast<int>(i);
    return best;
}

void check_data(const ModelState& state, const Dataset& data) {
    if (data.samples.empty())
        throw EmptyDataset("trainer: empty dataset");
    if (data.channels != state.channels())
        throw BadShape("trainer: dataset channels do not match backbone");
    if (data.classes != state.classes())
        throw BadShape("trainer: dataset classes do not match model");
}

double max_orthonormality_residual(const ModelState& state) {
    double r = 0.0;
    for (const ClassSubspace& sub : state.subspaces)
        r = std::max(r, orthonormality_residual(sub.basis.basis()));
    return r;
}

// Drift policy: re-run QR on any basis whose residual exceeds 1e-8.
void reorthonormalize_if_needed(ModelState& state) {
    for (ClassSubspace& sub : state.subspaces)
        if (orthonormality_residual(sub.basis.basis()) > 1e-8)
            sub.basis = StiefelPoint(qr_factor(sub.basis.basis()).q);
}

} // namespace

EpochReport train_epoch(ModelState& state, const Dataset& data, const TrainingConfig& cfg) {
    cfg.validate();
    check_data(state, data);

    const int n = data.size();
    const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps =
        static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>(batches);

    const ModelState snapshot = state;
    try {
        // Per-epoch seeded shuffle.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(cfg.seed ^ static_cast<std::uint64_t>(state.epoch));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.bounded(static_cast<std::uint64_t>(i) + 1)]);

        EpochReport report;
        double ce_sum = 0.0, sem_sum = 0.0, overlap_sum = 0.0, sparse_sum = 0.0;
        int correct = 0;

        for (int b = 0; b < batches; ++b) {
            const int begin = b * cfg.batch_size;
            const int end = std::min(n, begin + cfg.batch_size);
            const int count = end - begin;

            GradientBundle grads = GradientBundle::zeros(
                state.subspaces, data.height * data.width);
            Matrix dw = Matrix::Zero(state.depth(), state.channels());
            Vector db = Vector::Zero(state.depth());

            for (int i = begin; i < end; ++i) {
                const Sample& s = data.samples[order[i]];
                const FeatureTensor f = embed(s.raw, state.backbone);
                const LossBreakdown loss = total_loss(f, s.label, state.subspaces, cfg.weights);
                if (!std::isfinite(loss.total))
                    throw NonFinite("train_epoch: non-finite loss");
                ce_sum += loss.ce;
                sem_sum += loss.sem;
                overlap_sum += loss.overlap;
                sparse_sum += loss.sparse;
                if (loss.predicted_class == s.label)
                    ++correct;

                const GradientBundle sample_grads =
                    backward_total(f, s.label, state.subspaces, cfg.weights);
                grads.add_scaled(1.0, sample_grads);
                const BackboneGradients bg =
                    embed_backward(sample_grads.features, s.raw, state.backbone);
                dw += bg.weight;
                db += bg.bias;
            }

            if (!grads.all_finite() || !dw.allFinite() || !db.allFinite())
                throw NonFinite("train_epoch: non-finite gradient");

            const double inv = 1.0 / count;
            const double lr =
                cfg.lr_override >= 0.0
                    ? cfg.lr_override
                    : cosine_lr(std::min(state.step, total_steps), total_steps,
                                cfg.lr_max, cfg.lr_min);
            if (lr != 0.0) {
                state.backbone.weight -= lr * inv * dw;
                state.backbone.bias -= lr * inv * db;
                for (int c = 0; c < state.classes(); ++c) {
                    ClassSubspace& sub = state.subspaces[c];
                    const StiefelPoint stepped =
                        rsgd_step(sub.basis, inv * grads.basis[c], lr);
                    const Vector sigma =
                        prox_step(sub.capacity, inv * grads.capacity[c], lr,
                                  cfg.weights.lambda, argmax_index(sub.capacity));
                    sub = ClassSubspace(stepped, sigma);
                }
            }

            ++state.step;
            if (state.step % 100 == 0)
                reorthonormalize_if_needed(state);
        }

        ++state.epoch;
        reorthonormalize_if_needed(state);

        report.mean_loss.ce = ce_sum / n;
        report.mean_loss.sem = sem_sum / n;
        report.mean_loss.overlap = overlap_sum / n;
        report.mean_loss.sparse = sparse_sum / n;
        report.mean_loss.total =
            report.mean_loss.ce + cfg.weights.gamma1 * report.mean_loss.sem +
            cfg.weights.gamma2 * report.mean_loss.overlap +
            cfg.weights.lambda * report.mean_loss.sparse;
        report.accuracy = static_cast<double>(correct) / n;
        report.active_ranks.reserve(state.classes());
        for (const ClassSubspace& sub : state.subspaces)
            report.active_ranks.push_back(active_set(sub.capacity).rank());
        report.max_residual = max_orthonormality_residual(state);
        return report;
    } catch (...) {
        state = snapshot;
        throw;
    }
}

std::vector<EpochReport> train(
    ModelState& state, const Dataset& data, const TrainingConfig& cfg,
    const std::function<void(const ModelState&, const EpochReport&)>& on_epoch) {
    cfg.validate();
    std::vector<EpochReport> reports;
    reports.reserve(cfg.epochs);
    for (int e = 0; e < cfg.epochs; ++e) {
        reports.push_back(train_epoch(state, data, cfg));
        if (on_epoch)
            on_epoch(state, reports.back());
    }
    return reports;
}

EvalResult evaluate(const ModelState& state, const Dataset& data, const LossWeights& weights) {
    check_data(state, data);
    EvalResult result;
    double ce = 0.0, sem = 0.0, overlap = 0.0, sparse = 0.0;
    int correct = 0;
    for (const Sample& s : data.samples) {
        const FeatureTensor f = embed(s.raw, state.backbone);
        const LossBreakdown loss = total_loss(f, s.label, state.subspaces, weights);
        ce += loss.ce;
        sem += loss.sem;
        overlap += loss.overlap;
        sparse += loss.sparse;
        if (loss.predicted_class == s.label)
            ++correct;
    }
    const int n = data.size();
    result.mean_loss.ce = ce / n;
    result.mean_loss.sem = sem / n;
    result.mean_loss.overlap = overlap / n;
    result.mean_loss.sparse = sparse / n;
    result.mean_loss.total = result.mean_loss.ce + weights.gamma1 * result.mean_loss.sem +
                             weights.gamma2 * result.mean_loss.overlap +
                             weights.lambda * result.mean_loss.sparse;
    result.accuracy = static_cast<double>(correct) / n;
    return result;
}

// ---------------------------------------------------------------------------
// AMPC checkpoints
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "AMPC serialization assumes a little-endian host");

namespace {

constexpr char kCkptMagic[4] = {'A', 'M', 'P', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + 4);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + 8);
}

void put_f64_block(std::vector<unsigned char>& out, const double* data, std::size_t n) {
    const auto* p = reinterpret_cast<const unsigned char*>(data);
    out.insert(out.end(), p, p + 8 * n);
}

} // namespace

std::vector<unsigned char> checkpoint_bytes(const ModelState& state) {
    if (state.subspaces.empty())
        throw BadShape("checkpoint_bytes: no subspaces");
    const int classes = state.classes();
    const int depth = state.depth();
    const int channels = state.channels();
    const int k = state.subspaces[0].directions();
    for (const ClassSubspace& sub : state.subspaces)
        if (sub.directions() != k || sub.ambient_dim() != depth)
            throw BadShape("checkpoint_bytes: inhomogeneous subspace shapes");

    std::vector<unsigned char> out;
    out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
    put_u32(out, kCkptVersion);
    put_u32(out, static_cast<std::uint32_t>(classes));
    put_u32(out, static_cast<std::uint32_t>(depth));
    put_u32(out, static_cast<std::uint32_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(k));
    put_f64_block(out, state.backbone.weight.data(),
                  static_cast<std::size_t>(depth) * channels);
    put_f64_block(out, state.backbone.bias.data(), static_cast<std::size_t>(depth));
    for (const ClassSubspace& sub : state.subspaces) {
        put_f64_block(out, sub.basis.basis().data(),
                      static_cast<std::size_t>(depth) * k);
        put_f64_block(out, sub.capacity.data(), static_cast<std::size_t>(k));
    }
    put_u64(out, fnv1a(out.data(), out.size()));
    return out;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
    const std::vector<unsigned char> bytes = checkpoint_bytes(state);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file ||
        !file.write(reinterpret_cast<const char*>(bytes.data()),
                    static_cast<std::streamsize>(bytes.size())))
        throw IOFailure("save_checkpoint: cannot write " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file)
        throw IOFailure("load_checkpoint: cannot open " + path);
    std::vector<unsigned char> in((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());

    if (in.size() < 20 + 8 || std::memcmp(in.data(), kCkptMagic, 4) != 0)
        throw CorruptCheckpoint("load_checkpoint: bad magic");

    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, in.data() + in.size() - 8, 8);
    if (stored_sum != fnv1a(in.data(), in.size() - 8))
        throw CorruptCheckpoint("load_checkpoint: checksum mismatch");

    std::size_t off = 4;
    auto get_u32 = [&in, &off]() {
        std::uint32_t v;
        std::memcpy(&v, in.data() + off, 4);
        off += 4;
        return v;
    };
    if (get_u32() != kCkptVersion)
        throw CorruptCheckpoint("load_checkpoint: unsupported version");
    const std::uint32_t classes = get_u32();
    const std::uint32_t depth = get_u32();
    const std::uint32_t channels = get_u32();
    const std::uint32_t k = get_u32();
    if (classes == 0 || depth == 0 || channels == 0 || k == 0 || k > depth)
        throw CorruptCheckpoint("load_checkpoint: implausible dimensions");

    const std::size_t doubles = static_cast<std::size_t>(depth) * channels + depth +
                                static_cast<std::size_t>(classes) * (static_cast<std::size_t>(depth) * k + k);
    if (in.size() != 24 + 8 * doubles + 8)
        throw CorruptCheckpoint("load_checkpoint: file length mismatch");

    auto get_f64_block = [&in, &off](double* dst, std::size_t n) {
        std::memcpy(dst, in.data() + off, 8 * n);
        off += 8 * n;
    };

    ModelState state;
    state.backbone.weight.resize(depth, channels);
    get_f64_block(state.backbone.weight.data(),
                  static_cast<std::size_t>(depth) * channels);
    state.backbone.bias.resize(depth);
    get_f64_block(state.backbone.bias.data(), depth);
    if (!state.backbone.weight.allFinite() || !state.backbone.bias.allFinite())
        throw InvariantViolation("load_checkpoint: non-finite backbone");

    state.subspaces.reserve(classes);
    for (std::uint32_t c = 0; c < classes; ++c) {
        Matrix u(depth, k);
        get_f64_block(u.data(), static_cast<std::size_t>(depth) * k);
        Vector sigma(k);
        get_f64_block(sigma.data(), k);
        // StiefelPoint and ClassSubspace constructors enforce the manifold
        // and nonnegativity invariants, throwing InvariantViolation.
        state.subspaces.emplace_back(StiefelPoint(std::move(u)), std::move(sigma));
    }
    return state;
}

} // namespace amp
