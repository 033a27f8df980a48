#include "amp/collapse_lab.hpp"

#include "amp/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace amp {

void SyntheticSpec::validate() const {
    if (classes < 1 || channels < 1 || height < 1 || width < 1 || samples_per_class < 1)
        throw BadSpec("SyntheticSpec: counts must be >= 1");
    if (parts < 1 || parts > std::min(channels, height * width))
        throw BadSpec("SyntheticSpec: need 1 <= parts <= min(channels, H*W)");
    if (noise < 0.0 || !std::isfinite(noise) || !std::isfinite(part_scale))
        throw BadSpec("SyntheticSpec: bad noise/part_scale");
}

std::vector<Matrix> planted_directions(const SyntheticSpec& spec) {
    spec.validate();
    const std::uint64_t structure = spec.seed >> 32;
    std::vector<Matrix> dirs;
    dirs.reserve(spec.classes);
    for (int c = 0; c < spec.classes; ++c) {
        Rng rng(mix_seed(structure ^ (0x9e3779b97f4a7c15ULL * (c + 1))));
        Matrix g(spec.channels, spec.parts);
        for (int i = 0; i < spec.channels; ++i)
            for (int j = 0; j < spec.parts; ++j)
                g(i, j) = rng.normal();
        dirs.push_back(qr_factor(g).q);
    }
    return dirs;
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::vector<Matrix> dirs = planted_directions(spec);
    const std::uint64_t noise_component = spec.seed & 0xffffffffULL;
    Rng rng(mix_seed(noise_component ^ 0xd1b54a32d192ed03ULL));

    Dataset data;
    data.classes = spec.classes;
    data.channels = spec.channels;
    data.height = spec.height;
    data.width = spec.width;
    data.samples.reserve(static_cast<std::size_t>(spec.classes) * spec.samples_per_class);

    const int locations = spec.height * spec.width;
    std::vector<int> slots(locations);
    for (int c = 0; c < spec.classes; ++c) {
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Sample s;
            s.label = c;
            s.raw = FeatureTensor(spec.channels, spec.height, spec.width);
            const double background = spec.noise / 10.0;
            for (Eigen::Index l = 0; l < s.raw.values.cols(); ++l)
                for (Eigen::Index d = 0; d < s.raw.values.rows(); ++d)
                    s.raw.values(d, l) = background * rng.normal();
            // Distinct part locations via partial Fisher-Yates.
            std::iota(slots.begin(), slots.end(), 0);
            for (int r = 0; r < spec.parts; ++r) {
                const int pick =
                    r + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(locations - r)));
                std::swap(slots[r], slots[pick]);
            }
            for (int r = 0; r < spec.parts; ++r) {
                const int l = slots[r];
                for (int d = 0; d < spec.channels; ++d)
                    s.raw.values(d, l) = spec.part_scale * dirs[c](d, r) + spec.noise * rng.normal();
            }
            data.samples.push_back(std::move(s));
        }
    }
    return data;
}

BaselineScores baseline_forward(const FeatureTensor& f, const EuclideanPrototypes& protos) {
    if (protos.per_class.empty())
        throw BadShape("baseline_forward: no prototypes");
    const int classes = static_cast<int>(protos.per_class.size());
    const int k = static_cast<int>(protos.per_class[0].cols());
    BaselineScores out;
    out.scores.resize(classes, k);
    out.argmax.resize(classes, k);
    for (int c = 0; c < classes; ++c) {
        const Matrix& p = protos.per_class[c];
        if (p.rows() != f.depth || p.cols() != k)
            throw BadShape("baseline_forward: prototype shape mismatch");
        for (int j = 0; j < k; ++j) {
            int best = 0;
            double best_score = -(f.values.col(0) - p.col(j)).squaredNorm();
            for (Eigen::Index l = 1; l < f.values.cols(); ++l) {
                const double score = -(f.values.col(l) - p.col(j)).squaredNorm();
                if (score > best_score) {
                    best_score = score;
                    best = static_cast<int>(l);
                }
            }
            out.scores(c, j) = best_score;
            out.argmax(c, j) = best;
        }
    }
    return out;
}

BaselineModel init_baseline(int classes, int depth, int channels, int k,
                            std::uint64_t seed) {
    if (classes < 1 || k < 1)
        throw BadShape("init_baseline: need classes >= 1 and k >= 1");
    BaselineModel m;
    m.backbone = init_backbone(depth, channels, mix_seed(seed));
    m.protos.per_class.reserve(classes);
    Rng rng(mix_seed(seed ^ 0xa02bdbf7bb3c0a7ULL));
    for (int c = 0; c < classes; ++c) {
        Matrix p(depth, k);
        for (int i = 0; i < depth; ++i)
            for (int j = 0; j < k; ++j)
                p(i, j) = 0.1 * rng.normal();
        m.protos.per_class.push_back(std::move(p));
    }
    // Class-connection init: +1 to own class, -0.5 elsewhere.
    m.classifier.resize(classes, classes * k);
    for (int c = 0; c < classes; ++c)
        for (int c2 = 0; c2 < classes; ++c2)
            for (int j = 0; j < k; ++j)
                m.classifier(c, c2 * k + j) = (c == c2) ? 1.0 : -0.5;
    m.classifier_bias = Vector::Zero(classes);
    return m;
}

void init_prototypes_from_patches(BaselineModel& model, const Dataset& data,
                                  std::uint64_t seed) {
    const int classes = model.classes();
    std::vector<std::vector<int>> by_class(classes);
    for (int i = 0; i < data.size(); ++i)
        if (data.samples[i].label >= 0 && data.samples[i].label < classes)
            by_class[data.samples[i].label].push_back(i);

    Rng rng(mix_seed(seed ^ 0x8f1bbcdcbfa53e0bULL));
    for (int c = 0; c < classes; ++c) {
        if (by_class[c].empty())
            throw EmptyClass("init_prototypes_from_patches: class has no samples");
        for (Eigen::Index k = 0; k < model.protos.per_class[c].cols(); ++k) {
            const int j = by_class[c][rng.bounded(by_class[c].size())];
            const FeatureTensor f = embed(data.samples[j].raw, model.backbone);
            const int l = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(f.locations())));
            model.protos.per_class[c].col(k) = f.values.col(l);
        }
    }
}

Vector baseline_logits(const BaselineScores& scores, const BaselineModel& model) {
    const int classes = model.classes();
    const int k = model.directions();
    Vector flat(classes * k);
    for (int c = 0; c < classes; ++c)
        for (int j = 0; j < k; ++j)
            flat(c * k + j) = scores.scores(c, j);
    return model.classifier * flat + model.classifier_bias;
}

BaselineEpochReport train_baseline_epoch(BaselineModel& model, const Dataset& data,
                                         const TrainingConfig& cfg) {
    cfg.validate();
    if (data.samples.empty())
        throw EmptyDataset("train_baseline_epoch: empty dataset");

    const int n = data.size();
    const int classes = model.classes();
    const int k = model.directions();
    const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps =
        static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>(batches);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(cfg.seed ^ static_cast<std::uint64_t>(model.epoch));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.bounded(static_cast<std::uint64_t>(i) + 1)]);

    BaselineEpochReport report;
    int correct = 0;
    double ce_sum = 0.0;

    for (int b = 0; b < batches; ++b) {
        const int begin = b * cfg.batch_size;
        const int end = std::min(n, begin + cfg.batch_size);
        const int count = end - begin;

        std::vector<Matrix> dprotos(classes);
        for (int c = 0; c < classes; ++c)
            dprotos[c] = Matrix::Zero(model.protos.per_class[c].rows(), k);
        Matrix dclassifier = Matrix::Zero(classes, classes * k);
        Vector dbias = Vector::Zero(classes);
        Matrix dw = Matrix::Zero(model.backbone.weight.rows(), model.backbone.weight.cols());
        Vector db = Vector::Zero(model.backbone.weight.rows());

        for (int i = begin; i < end; ++i) {
            const Sample& s = data.samples[order[i]];
            const FeatureTensor f = embed(s.raw, model.backbone);
            const BaselineScores scores = baseline_forward(f, model.protos);
            const Vector logits = baseline_logits(scores, model);
            ce_sum += cross_entropy(logits, s.label);
            int pred = 0;
            for (Eigen::Index c = 1; c < logits.size(); ++c)
                if (logits(c) > logits(pred))
                    pred = static_cast<int>(c);
            if (pred == s.label)
                ++correct;

            const Vector p = softmax(logits);
            Vector dlogits = p;
            dlogits(s.label) -= 1.0;

            Vector flat(classes * k);
            for (int c = 0; c < classes; ++c)
                for (int j = 0; j < k; ++j)
                    flat(c * k + j) = scores.scores(c, j);
            dclassifier += dlogits * flat.transpose();
            dbias += dlogits;

            const Vector dscores = model.classifier.transpose() * dlogits;
            Matrix dfeat = Matrix::Zero(f.depth, f.locations());
            for (int c = 0; c < classes; ++c) {
                for (int j = 0; j < k; ++j) {
                    const double ds = dscores(c * k + j);
                    const int l = scores.argmax(c, j);
                    const Vector diff = f.values.col(l) - model.protos.per_class[c].col(j);
                    // g = -||F_l - p||^2: dg/dp = 2 diff, dg/dF_l = -2 diff.
                    dprotos[c].col(j) += ds * 2.0 * diff;
                    dfeat.col(l) -= ds * 2.0 * diff;
                }
            }
            const BackboneGradients bg = embed_backward(dfeat, s.raw, model.backbone);
            dw += bg.weight;
            db += bg.bias;
        }

        const double inv = 1.0 / count;
        const double lr = cosine_lr(std::min(model.step, total_steps), total_steps,
                                    cfg.lr_max, cfg.lr_min);
        if (lr != 0.0) {
            model.backbone.weight -= lr * inv * dw;
            model.backbone.bias -= lr * inv * db;
            for (int c = 0; c < classes; ++c)
                model.protos.per_class[c] -= lr * inv * dprotos[c];
            model.classifier -= lr * inv * dclassifier;
            model.classifier_bias -= lr * inv * dbias;
        }
        ++model.step;
    }

    ++model.epoch;
    report.mean_ce = ce_sum / n;
    report.accuracy = static_cast<double>(correct) / n;
    return report;
}

double baseline_accuracy(const BaselineModel& model, const Dataset& data) {
    if (data.samples.empty())
        throw EmptyDataset("baseline_accuracy: empty dataset");
    int correct = 0;
    for (const Sample& s : data.samples) {
        const FeatureTensor f = embed(s.raw, model.backbone);
        const Vector logits = baseline_logits(baseline_forward(f, model.protos), model);
        int pred = 0;
        for (Eigen::Index c = 1; c < logits.size(); ++c)
            if (logits(c) > logits(pred))
                pred = static_cast<int>(c);
        if (pred == s.label)
            ++correct;
    }
    return static_cast<double>(correct) / data.size();
}

EuclideanPrototypes project_prototypes(const EuclideanPrototypes& protos,
                                       const Dataset& data,
                                       const BackboneParams& backbone) {
    const int classes = static_cast<int>(protos.per_class.size());
    // Cache class features once; exhaustive search per prototype.
    std::vector<std::vector<FeatureTensor>> feats(classes);
    for (const Sample& s : data.samples)
        if (s.label >= 0 && s.label < classes)
            feats[s.label].push_back(embed(s.raw, backbone));

    EuclideanPrototypes out = protos;
    for (int c = 0; c < classes; ++c) {
        if (feats[c].empty())
            throw EmptyClass("project_prototypes: class has no samples");
        for (Eigen::Index j = 0; j < protos.per_class[c].cols(); ++j) {
            const Vector p = protos.per_class[c].col(j);
            double best = std::numeric_limits<double>::infinity();
            Vector best_patch;
            for (const FeatureTensor& f : feats[c]) {
                for (Eigen::Index l = 0; l < f.values.cols(); ++l) {
                    const double d = (f.values.col(l) - p).squaredNorm();
                    if (d < best) {
                        best = d;
                        best_patch = f.values.col(l);
                    }
                }
            }
            out.per_class[c].col(j) = best_patch;
        }
    }
    return out;
}

double stable_rank(const Matrix& p) {
    const double fro2 = p.squaredNorm();
    if (fro2 == 0.0)
        throw ZeroMatrix("stable_rank: zero matrix");
    Eigen::JacobiSVD<Matrix> svd(p);
    const double smax = svd.singularValues()(0);
    const double ratio = fro2 / (smax * smax);
    // Mathematically in [1, K]; clamp roundoff.
    return std::clamp(ratio, 1.0, static_cast<double>(p.cols()));
}

double mean_pairwise_cosine(const Matrix& p) {
    const int k = static_cast<int>(p.cols());
    if (k < 2)
        return 1.0;
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double ni = p.col(i).norm();
            const double nj = p.col(j).norm();
            if (ni == 0.0 || nj == 0.0)
                continue;
            sum += p.col(i).dot(p.col(j)) / (ni * nj);
            ++pairs;
        }
    }
    return pairs > 0 ? sum / pairs : 0.0;
}

NCMetrics nc_metrics(const std::vector<std::vector<Vector>>& features_by_class) {
    const int classes = static_cast<int>(features_by_class.size());
    if (classes < 2)
        throw Degenerate("nc_metrics: need at least two classes");
    for (const auto& fs : features_by_class)
        if (fs.size() < 2)
            throw Degenerate("nc_metrics: a class has fewer than two samples");

    NCMetrics m;
    m.class_means.reserve(classes);
    std::size_t total = 0;
    for (const auto& fs : features_by_class) {
        Vector mean = Vector::Zero(fs[0].size());
        for (const Vector& f : fs)
            mean += f;
        mean /= static_cast<double>(fs.size());
        m.class_means.push_back(std::move(mean));
        total += fs.size();
    }

    double trace = 0.0;
    for (int c = 0; c < classes; ++c)
        for (const Vector& f : features_by_class[c])
            trace += (f - m.class_means[c]).squaredNorm();
    m.within_trace = trace / static_cast<double>(total);

    Vector global = Vector::Zero(m.class_means[0].size());
    for (const Vector& mu : m.class_means)
        global += mu;
    global /= static_cast<double>(classes);

    const double target = -1.0 / (classes - 1);
    double dev = 0.0;
    for (int a = 0; a < classes; ++a) {
        for (int b = a + 1; b < classes; ++b) {
            const Vector ca = m.class_means[a] - global;
            const Vector cb = m.class_means[b] - global;
            const double na = ca.norm();
            const double nb = cb.norm();
            if (na == 0.0 || nb == 0.0)
                throw Degenerate("nc_metrics: class mean coincides with global mean");
            dev = std::max(dev, std::abs(ca.dot(cb) / (na * nb) - target));
        }
    }
    m.etf_deviation = dev;
    return m;
}

namespace {

std::vector<std::vector<Vector>> spatial_features_by_class(const Dataset& data,
                                                           const BackboneParams& backbone) {
    std::vector<std::vector<Vector>> feats(data.classes);
    for (const Sample& s : data.samples) {
        const FeatureTensor f = embed(s.raw, backbone);
        for (Eigen::Index l = 0; l < f.values.cols(); ++l)
            feats[s.label].push_back(f.values.col(l));
    }
    return feats;
}

} // namespace

CollapseReport collapse_demo(const SyntheticSpec& spec, int epochs, int k) {
    spec.validate();
    if (epochs < 1 || k < 1)
        throw BadSpec("collapse_demo: need epochs >= 1 and k >= 1");

    const Dataset data = gen_synthetic(spec);

    TrainingConfig cfg;
    cfg.epochs = epochs;
    cfg.k = k;
    cfg.seed = spec.seed;
    cfg.lr_max = 0.01; // both models need this much drive to converge here
    cfg.lr_min = 5e-4;
    cfg.weights.lambda = 0.0; // contrast isolates the geometric constraint

    const int depth = 16;
    BaselineModel baseline = init_baseline(spec.classes, depth, spec.channels, k, spec.seed);
    // Ground the free prototypes to training patches before the run starts.
    baseline.protos = project_prototypes(baseline.protos, data, baseline.backbone);
    ModelState model = init_model(spec.classes, depth, spec.channels, cfg);

    CollapseReport report;
    report.rows.reserve(epochs);
    for (int e = 0; e < epochs; ++e) {
        const BaselineEpochReport br = train_baseline_epoch(baseline, data, cfg);
        const EpochReport ar = train_epoch(model, data, cfg);

        CollapseEpochRow row;
        row.epoch = e;
        row.baseline_ce = br.mean_ce;
        row.baseline_accuracy = br.accuracy;
        double min_rank = std::numeric_limits<double>::infinity();
        double sum_rank = 0.0, sum_cos = 0.0;
        for (const Matrix& p : baseline.protos.per_class) {
            const double r = stable_rank(p);
            min_rank = std::min(min_rank, r);
            sum_rank += r;
            sum_cos += mean_pairwise_cosine(p);
        }
        row.min_stable_rank = min_rank;
        row.mean_stable_rank = sum_rank / spec.classes;
        row.mean_cosine = sum_cos / spec.classes;
        const NCMetrics nc = nc_metrics(spatial_features_by_class(data, baseline.backbone));
        row.within_trace = nc.within_trace;
        row.etf_deviation = nc.etf_deviation;
        row.amp_mean_rank =
            std::accumulate(ar.active_ranks.begin(), ar.active_ranks.end(), 0.0) /
            spec.classes;
        row.amp_residual = ar.max_residual;
        report.rows.push_back(row);
    }

    for (const Matrix& p : baseline.protos.per_class) {
        report.final_stable_ranks.push_back(stable_rank(p));
        report.final_cosines.push_back(mean_pairwise_cosine(p));
    }
    const NCMetrics nc = nc_metrics(spatial_features_by_class(data, baseline.backbone));
    report.final_within_trace = nc.within_trace;
    report.final_etf_deviation = nc.etf_deviation;
    report.baseline_accuracy = baseline_accuracy(baseline, data);
    for (const ClassSubspace& sub : model.subspaces)
        report.final_amp_ranks.push_back(active_set(sub.capacity).rank());
    report.final_amp_residual = 0.0;
    for (const ClassSubspace& sub : model.subspaces)
        report.final_amp_residual =
            std::max(report.final_amp_residual, orthonormality_residual(sub.basis.basis()));
    report.amp_accuracy = evaluate(model, data, cfg.weights).accuracy;
    return report;
}

} // namespace amp
