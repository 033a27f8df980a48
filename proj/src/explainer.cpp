#include "amp/explainer.hpp"

#include "amp/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace amp {

namespace {

std::uint64_t state_fingerprint(const ModelState& state) {
    const std::vector<unsigned char> bytes = checkpoint_bytes(state);
    return fnv1a(bytes.data(), bytes.size());
}

} // namespace

FeatureCache build_cache(const ModelState& state, const Dataset& data) {
    if (data.samples.empty())
        throw EmptyDataset("build_cache: empty dataset");
    if (data.classes != state.classes())
        throw BadShape("build_cache: dataset classes do not match model");
    FeatureCache cache;
    cache.by_class.resize(data.classes);
    for (int i = 0; i < data.size(); ++i) {
        const Sample& s = data.samples[i];
        cache.by_class[s.label].emplace_back(i, embed(s.raw, state.backbone));
    }
    cache.fingerprint = state_fingerprint(state);
    return cache;
}

PatchReference nearest_patch(int direction, int cls, const ModelState& state,
                             const FeatureCache& cache) {
    if (cache.fingerprint != state_fingerprint(state))
        throw StaleCache("nearest_patch: cache built from a different model state");
    if (cls < 0 || cls >= state.classes())
        throw BadLabel("nearest_patch: class out of range");
    const ClassSubspace& sub = state.subspaces[cls];
    if (direction < 0 || direction >= sub.directions())
        throw BadShape("nearest_patch: direction out of range");
    if (cache.by_class[cls].empty())
        throw EmptyClass("nearest_patch: no cached samples for class");

    const auto u_k = sub.basis.basis().col(direction);
    PatchReference best;
    double best_energy = -1.0;
    for (const auto& [index, feat] : cache.by_class[cls]) {
        for (Eigen::Index l = 0; l < feat.values.cols(); ++l) {
            const double a = u_k.dot(feat.values.col(l));
            const double energy = a * a;
            if (energy > best_energy) {
                best_energy = energy;
                best.sample = index;
                best.h = static_cast<int>(l) / feat.width;
                best.w = static_cast<int>(l) % feat.width;
                best.energy = energy;
            }
        }
    }
    return best;
}

Explanation explain(const FeatureTensor& raw, const ModelState& state,
                    const FeatureCache& cache, int forced_class) {
    if (cache.fingerprint != state_fingerprint(state))
        throw StaleCache("explain: cache built from a different model state");

    const FeatureTensor f = embed(raw, state.backbone);
    const LogitRecord rec = class_logits(f, state.subspaces);

    Explanation out;
    int predicted = 0;
    for (Eigen::Index c = 1; c < rec.logits.size(); ++c)
        if (rec.logits(c) > rec.logits(predicted))
            predicted = static_cast<int>(c);
    out.predicted_class = predicted;
    const int target = forced_class >= 0 ? forced_class : predicted;
    if (target >= state.classes())
        throw BadLabel("explain: forced class out of range");

    const ClassSubspace& sub = state.subspaces[target];
    const ResponseMap weighted = response_map(f, sub, true);
    const ActiveSet act = active_set(sub.capacity);

    out.parts.reserve(act.indices.size());
    double total = 0.0;
    for (int k : act.indices) {
        PartEvidence part;
        part.direction = k;
        part.capacity = sub.capacity(k);
        part.heatmap.resize(f.height, f.width);
        int peak = 0;
        for (Eigen::Index l = 0; l < weighted.energy.cols(); ++l) {
            part.heatmap(static_cast<int>(l) / f.width, static_cast<int>(l) % f.width) =
                weighted.energy(k, l);
            if (weighted.energy(k, l) > weighted.energy(k, peak))
                peak = static_cast<int>(l);
        }
        part.peak_h = peak / f.width;
        part.peak_w = peak % f.width;
        part.contribution = weighted.energy(k, peak);
        part.patch = nearest_patch(k, target, state, cache);
        part.heatmap_file = "part_" + std::to_string(k) + ".pgm";
        total += part.contribution;
        out.parts.push_back(std::move(part));
    }
    out.total_evidence = total;
    return out;
}

void export_heatmap_pgm(const Matrix& map, const std::string& path) {
    if (!map.allFinite())
        throw NonFinite("export_heatmap_pgm: non-finite map");
    const double lo = map.minCoeff();
    const double hi = map.maxCoeff();
    const double span = hi - lo;

    std::string out = "P5\n" + std::to_string(map.cols()) + " " +
                      std::to_string(map.rows()) + "\n255\n";
    for (Eigen::Index h = 0; h < map.rows(); ++h) {
        for (Eigen::Index w = 0; w < map.cols(); ++w) {
            const double v = span == 0.0 ? 0.0 : 255.0 * (map(h, w) - lo) / span;
            out.push_back(static_cast<char>(
                static_cast<unsigned char>(std::lround(v))));
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file || !file.write(out.data(), static_cast<std::streamsize>(out.size())))
        throw IOFailure("export_heatmap_pgm: cannot write " + path);
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void export_explanation_json(const Explanation& expl, const std::string& path) {
    std::string out;
    out += "{\n";
    out += "  \"predicted_class\": " + std::to_string(expl.predicted_class) + ",\n";
    out += "  \"total_evidence\": " + fmt_double(expl.total_evidence) + ",\n";
    out += "  \"parts\": [";
    for (std::size_t i = 0; i < expl.parts.size(); ++i) {
        const PartEvidence& p = expl.parts[i];
        out += i == 0 ? "\n" : ",\n";
        out += "    {\n";
        out += "      \"direction\": " + std::to_string(p.direction) + ",\n";
        out += "      \"capacity\": " + fmt_double(p.capacity) + ",\n";
        out += "      \"peak\": [" + std::to_string(p.peak_h) + ", " +
               std::to_string(p.peak_w) + "],\n";
        out += "      \"contribution\": " + fmt_double(p.contribution) + ",\n";
        out += "      \"patch\": {\"sample\": " + std::to_string(p.patch.sample) +
               ", \"h\": " + std::to_string(p.patch.h) +
               ", \"w\": " + std::to_string(p.patch.w) + "},\n";
        out += "      \"heatmap_file\": \"" + p.heatmap_file + "\"\n";
        out += "    }";
    }
    out += expl.parts.empty() ? "]\n" : "\n  ]\n";
    out += "}\n";

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file || !file.write(out.data(), static_cast<std::streamsize>(out.size())))
        throw IOFailure("export_explanation_json: cannot write " + path);
}

} // namespace amp
