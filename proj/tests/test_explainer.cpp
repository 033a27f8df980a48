#include "amp/collapse_lab.hpp"
#include "amp/explainer.hpp"
#include "amp/rng.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace amp;

namespace {

struct Fixture {
    Dataset data;
    ModelState state;
    FeatureCache cache;

    Fixture() {
        SyntheticSpec spec;
        spec.classes = 3;
        spec.channels = 6;
        spec.height = 3;
        spec.width = 4;
        spec.parts = 2;
        spec.part_scale = 3.0;
        spec.noise = 0.1;
        spec.samples_per_class = 8;
        spec.seed = make_seed(5, 5);
        data = gen_synthetic(spec);

        TrainingConfig cfg;
        cfg.epochs = 6;
        cfg.batch_size = 8;
        cfg.k = 4;
        cfg.seed = 13;
        state = init_model(data.classes, 8, data.channels, cfg);
        train(state, data, cfg);
        cache = build_cache(state, data);
    }
};

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("explanations satisfy evidence additivity and peak consistency") {
    Fixture fx;
    for (int i = 0; i < fx.data.size(); ++i) {
        const Explanation e = explain(fx.data.samples[i].raw, fx.state, fx.cache);
        const LogitRecord rec =
            class_logits(embed(fx.data.samples[i].raw, fx.state.backbone), fx.state.subspaces);
        CHECK(std::abs(e.total_evidence - rec.logits(e.predicted_class)) <= 1e-9);
        for (const PartEvidence& part : e.parts) {
            CHECK(part.contribution >= 0.0);
            CHECK(part.heatmap(part.peak_h, part.peak_w) == part.heatmap.maxCoeff());
            CHECK(part.contribution ==
                  doctest::Approx(part.heatmap(part.peak_h, part.peak_w)).epsilon(1e-15));
            CHECK(part.capacity > 0.0);
        }
    }
}

TEST_CASE("zero-capacity directions are absent from explanations") {
    Fixture fx;
    // Zero out two directions of every class.
    for (ClassSubspace& sub : fx.state.subspaces) {
        Vector sigma = sub.capacity;
        sigma(1) = 0.0;
        sigma(3) = 0.0;
        sub = ClassSubspace(sub.basis, sigma);
    }
    const FeatureCache cache = build_cache(fx.state, fx.data);
    const Explanation e = explain(fx.data.samples[0].raw, fx.state, cache);
    CHECK(e.parts.size() == 2);
    for (const PartEvidence& part : e.parts) {
        CHECK(part.direction != 1);
        CHECK(part.direction != 3);
    }
    const LogitRecord rec =
        class_logits(embed(fx.data.samples[0].raw, fx.state.backbone), fx.state.subspaces);
    CHECK(std::abs(e.total_evidence - rec.logits(e.predicted_class)) <= 1e-9);
}

TEST_CASE("single direction, single location: the one contribution is the logit") {
    Dataset data;
    data.classes = 2;
    data.channels = 4;
    data.height = 1;
    data.width = 1;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.label = i % 2;
        s.raw = FeatureTensor(4, 1, 1);
        Rng rng(100 + i);
        for (int d = 0; d < 4; ++d)
            s.raw.values(d, 0) = rng.normal();
        data.samples.push_back(std::move(s));
    }
    TrainingConfig cfg;
    cfg.k = 1;
    cfg.seed = 7;
    const ModelState state = init_model(2, 4, 4, cfg);
    const FeatureCache cache = build_cache(state, data);
    const Explanation e = explain(data.samples[0].raw, state, cache);
    REQUIRE(e.parts.size() == 1);
    const LogitRecord rec =
        class_logits(embed(data.samples[0].raw, state.backbone), state.subspaces);
    CHECK(e.parts[0].contribution == rec.logits(e.predicted_class));
    CHECK(e.total_evidence == rec.logits(e.predicted_class));
}

TEST_CASE("a stale cache is rejected") {
    Fixture fx;
    ModelState moved = fx.state;
    moved.backbone.bias(0) += 0.5;
    CHECK_THROWS_AS(explain(fx.data.samples[0].raw, moved, fx.cache), StaleCache);
    CHECK_THROWS_AS(nearest_patch(0, 0, moved, fx.cache), StaleCache);
}

TEST_CASE("nearest_patch returns the global argmax over the class cache") {
    Fixture fx;
    for (int c = 0; c < fx.state.classes(); ++c) {
        for (int k = 0; k < 4; ++k) {
            const PatchReference ref = nearest_patch(k, c, fx.state, fx.cache);
            const auto u_k = fx.state.subspaces[c].basis.basis().col(k);
            // Independent rescan.
            double best = -1.0;
            int best_sample = -1, best_h = -1, best_w = -1;
            for (const auto& [index, feat] : fx.cache.by_class[c]) {
                for (int h = 0; h < feat.height; ++h) {
                    for (int w = 0; w < feat.width; ++w) {
                        const double a = u_k.dot(feat.values.col(feat.loc(h, w)));
                        if (a * a > best) {
                            best = a * a;
                            best_sample = index;
                            best_h = h;
                            best_w = w;
                        }
                    }
                }
            }
            CHECK(ref.sample == best_sample);
            CHECK(ref.h == best_h);
            CHECK(ref.w == best_w);
            CHECK(ref.energy == doctest::Approx(best).epsilon(1e-14));
            CHECK(fx.data.samples[ref.sample].label == c);
        }
    }
}

TEST_CASE("a cached patch exactly parallel to the direction wins") {
    // Identity backbone so raw patches are the features.
    Dataset data;
    data.classes = 1;
    data.channels = 4;
    data.height = 1;
    data.width = 3;
    Sample s;
    s.label = 0;
    s.raw = FeatureTensor(4, 1, 3);
    s.raw.values.col(0) << 0.1, 0.2, 0.0, 0.0;
    s.raw.values.col(1) << 0.0, 0.0, 9.0, 0.0; // parallel to u, largest energy
    s.raw.values.col(2) << 0.3, 0.0, 0.1, 0.0;
    data.samples.push_back(s);

    TrainingConfig cfg;
    cfg.k = 1;
    ModelState state = init_model(1, 4, 4, cfg);
    state.backbone.weight = Matrix::Identity(4, 4);
    state.backbone.bias.setZero();
    Matrix u(4, 1);
    u << 0.0, 0.0, 1.0, 0.0;
    state.subspaces[0] = ClassSubspace(StiefelPoint(u), unit_capacity(1));

    const FeatureCache cache = build_cache(state, data);
    const PatchReference ref = nearest_patch(0, 0, state, cache);
    CHECK(ref.sample == 0);
    CHECK(ref.h == 0);
    CHECK(ref.w == 1);
    CHECK(ref.energy == doctest::Approx(81.0).epsilon(1e-14));

    CHECK_THROWS_AS(nearest_patch(0, 5, state, cache), BadLabel);
}

TEST_CASE("pgm export normalizes as specified") {
    const std::string path = temp_file("amp_test_map.pgm");

    SUBCASE("constant map exports as all zeros") {
        export_heatmap_pgm(Matrix::Constant(2, 3, 7.5), path);
        const std::string content = slurp(path);
        // Header is "P5\n3 2\n255\n", then 6 zero bytes.
        CHECK(content.substr(0, 11) == std::string("P5\n3 2\n255\n"));
        CHECK(content.size() == 11 + 6);
        for (int i = 0; i < 6; ++i)
            CHECK(content[11 + i] == '\0');
    }
    SUBCASE("two-point map hits both endpoints") {
        Matrix m(1, 2);
        m << 0.0, 1.0;
        export_heatmap_pgm(m, path);
        const std::string content = slurp(path);
        CHECK(content.size() == 11 + 2);
        CHECK(static_cast<unsigned char>(content[11]) == 0);
        CHECK(static_cast<unsigned char>(content[12]) == 255);
    }
    SUBCASE("random map: endpoints attained, order preserved") {
        Rng rng(81);
        Matrix m(4, 5);
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 5; ++w)
                m(h, w) = rng.normal();
        export_heatmap_pgm(m, path);
        const std::string content = slurp(path);
        REQUIRE(content.size() == 11 + 20);
        std::vector<unsigned char> px(20);
        for (int i = 0; i < 20; ++i)
            px[i] = static_cast<unsigned char>(content[11 + i]);
        unsigned char lo = 255, hi = 0;
        for (unsigned char p : px) {
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        CHECK(lo == 0);
        CHECK(hi == 255);
        for (int a = 0; a < 20; ++a)
            for (int b = 0; b < 20; ++b)
                if (m(a / 5, a % 5) < m(b / 5, b % 5))
                    CHECK(px[a] <= px[b]);
    }
    SUBCASE("non-finite maps are rejected") {
        Matrix bad = Matrix::Zero(2, 2);
        bad(0, 0) = std::nan("");
        CHECK_THROWS_AS(export_heatmap_pgm(bad, path), NonFinite);
    }
    std::filesystem::remove(path);
}

TEST_CASE("explanation json round-trips and is byte-stable") {
    Fixture fx;
    const Explanation e = explain(fx.data.samples[3].raw, fx.state, fx.cache);
    const std::string path = temp_file("amp_test_expl.json");
    export_explanation_json(e, path);
    const std::string first = slurp(path);
    export_explanation_json(e, path);
    CHECK(slurp(path) == first);

    const nlohmann::json parsed = nlohmann::json::parse(first);
    CHECK(parsed["predicted_class"].get<int>() == e.predicted_class);
    CHECK(parsed["total_evidence"].get<double>() == e.total_evidence);
    REQUIRE(parsed["parts"].size() == e.parts.size());
    for (std::size_t i = 0; i < e.parts.size(); ++i) {
        const auto& part = parsed["parts"][i];
        CHECK(part["direction"].get<int>() == e.parts[i].direction);
        CHECK(part["capacity"].get<double>() == e.parts[i].capacity);
        CHECK(part["peak"][0].get<int>() == e.parts[i].peak_h);
        CHECK(part["peak"][1].get<int>() == e.parts[i].peak_w);
        CHECK(part["contribution"].get<double>() == e.parts[i].contribution);
        CHECK(part["patch"]["sample"].get<int>() == e.parts[i].patch.sample);
        CHECK(part["patch"]["h"].get<int>() == e.parts[i].patch.h);
        CHECK(part["patch"]["w"].get<int>() == e.parts[i].patch.w);
        CHECK(part["heatmap_file"].get<std::string>() == e.parts[i].heatmap_file);
    }
    std::filesystem::remove(path);
}

TEST_CASE("explanation json with an empty active set") {
    Fixture fx;
    // Zero every capacity except the protected floor cannot be bypassed via
    // prox; construct the state directly instead.
    for (ClassSubspace& sub : fx.state.subspaces)
        sub = ClassSubspace(sub.basis, Vector::Zero(4));
    const FeatureCache cache = build_cache(fx.state, fx.data);
    const Explanation e = explain(fx.data.samples[0].raw, fx.state, cache);
    CHECK(e.parts.empty());
    CHECK(e.total_evidence == 0.0);

    const std::string path = temp_file("amp_test_empty.json");
    export_explanation_json(e, path);
    const nlohmann::json parsed = nlohmann::json::parse(slurp(path));
    CHECK(parsed["parts"].is_array());
    CHECK(parsed["parts"].empty());
    CHECK(parsed["total_evidence"].get<double>() == 0.0);
    std::filesystem::remove(path);
}
