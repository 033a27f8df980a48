#include "amp/gradcheck.hpp"

#include "amp/backbone.hpp"
#include "amp/rng.hpp"

#include <algorithm>
#include <cmath>

namespace amp {

namespace {

// Small fixed dimensions keep the full sweep under a second while still
// exercising every code path (C > 2, K > 1, H*W > 1, D != D_in).
constexpr int kDepth = 6;
constexpr int kDirections = 3;
constexpr int kClasses = 4;
constexpr int kSide = 3;
constexpr int kChannels = 5;
constexpr double kEpsilon = 1e-6;
constexpr double kMinPoolGap = 1e-3;

struct OracleState {
    BackboneParams backbone;
    FeatureTensor raw;
    std::vector<Matrix> bases;
    std::vector<Vector> capacities;
    int label = 0;

    std::vector<SubspaceView> make_views() const {
        std::vector<SubspaceView> v;
        v.reserve(bases.size());
        for (std::size_t c = 0; c < bases.size(); ++c)
            v.push_back({&bases[c], &capacities[c]});
        return v;
    }

    std::vector<ClassSubspace> make_subspaces() const {
        std::vector<ClassSubspace> subs;
        subs.reserve(bases.size());
        for (std::size_t c = 0; c < bases.size(); ++c)
            subs.emplace_back(StiefelPoint(bases[c]), capacities[c]);
        return subs;
    }
};

// The loss is nondifferentiable where two locations tie for a direction's
// max response; states too close to a tie are rejected and resampled.
bool pooling_gap_ok(const OracleState& state) {
    const FeatureTensor f = embed(state.raw, state.backbone);
    for (const Matrix& u : state.bases) {
        const Matrix energy = (u.transpose() * f.values).array().square().matrix();
        for (Eigen::Index k = 0; k < energy.rows(); ++k) {
            double top1 = -1.0, top2 = -1.0;
            for (Eigen::Index l = 0; l < energy.cols(); ++l) {
                if (energy(k, l) > top1) {
                    top2 = top1;
                    top1 = energy(k, l);
                } else if (energy(k, l) > top2) {
                    top2 = energy(k, l);
                }
            }
            if (top1 - top2 < kMinPoolGap)
                return false;
        }
    }
    return true;
}

OracleState make_state(std::uint64_t seed, int index) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        const std::uint64_t s =
            mix_seed(seed ^ (0x100000001b3ULL * (static_cast<std::uint64_t>(index) * 64 + attempt + 1)));
        Rng rng(s);

        OracleState state;
        state.backbone = init_backbone(kDepth, kChannels, rng.next());
        for (int i = 0; i < kDepth; ++i)
            state.backbone.bias(i) = 0.3 * rng.normal();
        state.raw = FeatureTensor(kChannels, kSide, kSide);
        for (Eigen::Index l = 0; l < state.raw.values.cols(); ++l)
            for (int d = 0; d < kChannels; ++d)
                state.raw.values(d, l) = rng.normal();
        for (int c = 0; c < kClasses; ++c) {
            state.bases.push_back(random_stiefel(kDepth, kDirections, rng.next()).basis());
            Vector sigma(kDirections);
            for (int k = 0; k < kDirections; ++k)
                sigma(k) = rng.uniform(0.3, 1.5); // away from the active-set boundary
            state.capacities.push_back(sigma);
        }
        state.label = index % kClasses;
        if (pooling_gap_ok(state))
            return state;
    }
    throw Error("run_gradient_oracle: could not sample a tie-free state");
}

enum class Term { Ce, Sem, Overlap, Total };

double term_value(Term term, const FeatureTensor& f, int label,
                  const std::vector<SubspaceView>& subs, const LossWeights& w) {
    const LossBreakdown b = total_loss(f, label, subs, w);
    switch (term) {
    case Term::Ce: return b.ce;
    case Term::Sem: return b.sem;
    case Term::Overlap: return b.overlap;
    case Term::Total:
        // Smooth part only; the l1 term belongs to the proximal update.
        return b.ce + w.gamma1 * b.sem + w.gamma2 * b.overlap;
    }
    return 0.0;
}

GradientBundle term_bundle(Term term, const FeatureTensor& f, int label,
                           const std::vector<ClassSubspace>& subs, const LossWeights& w) {
    switch (term) {
    case Term::Ce: return backward_ce(f, label, subs);
    case Term::Sem: return backward_sem(f, label, subs);
    case Term::Overlap: return backward_overlap(f, label, subs);
    case Term::Total: return backward_total(f, label, subs, w);
    }
    throw Error("term_bundle: unreachable");
}

Vector flatten(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

} // namespace

GradCheckResult run_gradient_oracle(std::uint64_t seed, int states) {
    if (states < 1)
        throw Error("run_gradient_oracle: need at least one state");

    LossWeights weights;
    weights.gamma1 = 0.3; // O(1) weights so composite errors are not masked
    weights.gamma2 = 0.2;
    weights.lambda = 1e-4;

    const Term terms[] = {Term::Ce, Term::Sem, Term::Overlap, Term::Total};
    const char* term_names[] = {"ce", "sem", "overlap", "total"};
    const char* group_names[] = {"basis", "capacity", "features", "backbone"};

    GradCheckResult result;
    result.states = states;
    for (const char* t : term_names)
        for (const char* g : group_names)
            result.entries.push_back({t, g, 0.0});
    auto entry = [&result](int t, int g) -> GradCheckEntry& {
        return result.entries[static_cast<std::size_t>(t) * 4 + g];
    };

    for (int i = 0; i < states; ++i) {
        const OracleState state = make_state(seed, i);
        const FeatureTensor f = embed(state.raw, state.backbone);
        const std::vector<ClassSubspace> subs = state.make_subspaces();

        for (int t = 0; t < 4; ++t) {
            const Term term = terms[t];
            const GradientBundle bundle = term_bundle(term, f, state.label, subs, weights);

            // All bases as one parameter group.
            {
                const int per_class = kDepth * kDirections;
                Vector point(kClasses * per_class), analytic(kClasses * per_class);
                for (int c = 0; c < kClasses; ++c) {
                    point.segment(c * per_class, per_class) = flatten(state.bases[c]);
                    analytic.segment(c * per_class, per_class) = flatten(bundle.basis[c]);
                }
                auto fn = [&](const Vector& x) {
                    OracleState probe = state;
                    for (int c = 0; c < kClasses; ++c)
                        probe.bases[c] = Eigen::Map<const Matrix>(
                            x.data() + c * per_class, kDepth, kDirections);
                    return term_value(term, f, state.label, probe.make_views(), weights);
                };
                const double err = finite_diff_check(fn, point, analytic, kEpsilon);
                entry(t, 0).max_error = std::max(entry(t, 0).max_error, err);
            }

            // All capacities as one parameter group.
            {
                Vector point(kClasses * kDirections), analytic(kClasses * kDirections);
                for (int c = 0; c < kClasses; ++c) {
                    point.segment(c * kDirections, kDirections) = state.capacities[c];
                    analytic.segment(c * kDirections, kDirections) = bundle.capacity[c];
                }
                auto fn = [&](const Vector& x) {
                    OracleState probe = state;
                    for (int c = 0; c < kClasses; ++c)
                        probe.capacities[c] = x.segment(c * kDirections, kDirections);
                    return term_value(term, f, state.label, probe.make_views(), weights);
                };
                const double err = finite_diff_check(fn, point, analytic, kEpsilon);
                entry(t, 1).max_error = std::max(entry(t, 1).max_error, err);
            }

            // Features.
            {
                auto fn = [&](const Vector& x) {
                    FeatureTensor probe = f;
                    probe.values = Eigen::Map<const Matrix>(x.data(), f.depth, f.locations());
                    return term_value(term, probe, state.label, state.make_views(), weights);
                };
                const double err = finite_diff_check(fn, flatten(f.values),
                                                     flatten(bundle.features), kEpsilon);
                entry(t, 2).max_error = std::max(entry(t, 2).max_error, err);
            }

            // Backbone parameters, chained through embed.
            {
                const BackboneGradients bg =
                    embed_backward(bundle.features, state.raw, state.backbone);
                Vector analytic(bg.weight.size() + bg.bias.size());
                analytic << flatten(bg.weight), bg.bias;
                Vector point(state.backbone.weight.size() + state.backbone.bias.size());
                point << flatten(state.backbone.weight), state.backbone.bias;
                auto fn = [&](const Vector& x) {
                    BackboneParams probe;
                    probe.weight =
                        Eigen::Map<const Matrix>(x.data(), kDepth, kChannels);
                    probe.bias = x.tail(kDepth);
                    return term_value(term, embed(state.raw, probe), state.label,
                                      state.make_views(), weights);
                };
                const double err = finite_diff_check(fn, point, analytic, kEpsilon);
                entry(t, 3).max_error = std::max(entry(t, 3).max_error, err);
            }
        }
    }

    for (const GradCheckEntry& e : result.entries)
        result.max_error = std::max(result.max_error, e.max_error);
    return result;
}

} // namespace amp
