#include "amp/head.hpp"
#include "amp/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace amp;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = rng.normal();
    return m;
}

FeatureTensor random_features(int depth, int h, int w, std::uint64_t seed) {
    FeatureTensor f(depth, h, w);
    f.values = random_matrix(depth, h * w, seed);
    return f;
}

ClassSubspace axis_subspace(Vector capacity) {
    Matrix basis = Matrix::Zero(3, 2);
    basis(0, 0) = 1.0;
    basis(1, 1) = 1.0;
    return {StiefelPoint(basis), std::move(capacity)};
}

} // namespace

TEST_CASE("projection_energy on axis-aligned subspaces") {
    Vector f(3);
    f << 3.0, 4.0, 5.0;

    Vector ones(2);
    ones << 1.0, 1.0;
    CHECK(projection_energy(f, axis_subspace(ones)) == doctest::Approx(25.0).epsilon(1e-14));

    Vector weighted(2);
    weighted << 2.0, 0.0;
    CHECK(projection_energy(f, axis_subspace(weighted)) == doctest::Approx(18.0).epsilon(1e-14));
}

TEST_CASE("projection_energy matches the direct-summation oracle") {
    const StiefelPoint u = random_stiefel(8, 3, 101);
    Rng rng(102);
    Vector sigma(3), f(8);
    for (int k = 0; k < 3; ++k)
        sigma(k) = rng.uniform(0.0, 2.0);
    for (int d = 0; d < 8; ++d)
        f(d) = rng.normal();

    double expected = 0.0;
    for (int k = 0; k < 3; ++k) {
        double a = 0.0;
        for (int d = 0; d < 8; ++d)
            a += u.basis()(d, k) * f(d);
        expected += sigma(k) * a * a;
    }
    const ClassSubspace sub{u, sigma};
    CHECK(projection_energy(f, sub) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(projection_energy(f, sub) >= 0.0);
}

TEST_CASE("response_map basics") {
    const StiefelPoint u = random_stiefel(6, 2, 111);
    Vector sigma(2);
    sigma << 0.7, 1.3;
    const ClassSubspace sub{u, sigma};

    SUBCASE("zero features give a zero map") {
        FeatureTensor f(6, 3, 4);
        const ResponseMap m = response_map(f, sub, false);
        CHECK(m.energy.norm() == 0.0);
    }
    SUBCASE("single location reduces to the per-direction energy terms") {
        FeatureTensor f = random_features(6, 1, 1, 112);
        const ResponseMap m = response_map(f, sub, true);
        CHECK(m.energy.rows() == 2);
        CHECK(m.energy.cols() == 1);
        CHECK(m.energy.col(0).sum() ==
              doctest::Approx(projection_energy(f.values.col(0), sub)).epsilon(1e-12));
    }
    SUBCASE("entries match scalar recomputation") {
        FeatureTensor f = random_features(6, 3, 4, 113);
        const ResponseMap unweighted = response_map(f, sub, false);
        const ResponseMap weighted = response_map(f, sub, true);
        for (int k = 0; k < 2; ++k) {
            for (int l = 0; l < 12; ++l) {
                const double a = u.basis().col(k).dot(f.values.col(l));
                CHECK(unweighted.energy(k, l) == doctest::Approx(a * a).epsilon(1e-12));
                CHECK(weighted.energy(k, l) ==
                      doctest::Approx(sigma(k) * a * a).epsilon(1e-12));
                CHECK(unweighted.energy(k, l) >= 0.0);
            }
        }
    }
}

TEST_CASE("spatial_softmax on flat and simple maps") {
    CHECK((spatial_softmax(Vector::Zero(4)) - Vector::Constant(4, 0.25)).norm() <= 1e-15);

    Vector m(4);
    m << std::log(2.0), 0.0, 0.0, 0.0;
    const Vector p = spatial_softmax(m);
    CHECK(p(0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p(2) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p(3) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("spatial_softmax sums to one and is shift invariant") {
    const Matrix m = random_matrix(1, 49, 121);
    const Vector p = spatial_softmax(m.row(0).transpose());
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    CHECK(p.minCoeff() > 0.0);
    const Vector shifted =
        spatial_softmax((m.row(0).transpose().array() + 123.456).matrix());
    CHECK((p - shifted).norm() <= 1e-12);
}

TEST_CASE("spatial_softmax survives huge energies") {
    Vector m(3);
    m << 1e4, 0.0, -1e4;
    const Vector p = spatial_softmax(m);
    CHECK(std::isfinite(p.sum()));
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
}

TEST_CASE("sem_loss attains its bounds") {
    SpatialDistribution dist;
    dist.height = 2;
    dist.width = 2;
    dist.p = Matrix::Constant(3, 4, 0.25);
    ActiveSet act;
    act.indices = {0, 1, 2};
    CHECK(sem_loss(dist, act) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    SUBCASE("concentrated map against the scalar entropy oracle") {
        dist.p.row(0) << 0.997, 1e-3, 1e-3, 1e-3;
        ActiveSet one;
        one.indices = {0};
        double expected = 0.0;
        for (int l = 0; l < 4; ++l)
            expected -= dist.p(0, l) * std::log(dist.p(0, l));
        CHECK(sem_loss(dist, one) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(sem_loss(dist, one) == doctest::Approx(0.02373).epsilon(1e-3));
    }
    SUBCASE("average over two active directions") {
        dist.p.row(0) << 0.997, 1e-3, 1e-3, 1e-3;
        ActiveSet two;
        two.indices = {0, 1};
        double h0 = 0.0;
        for (int l = 0; l < 4; ++l)
            h0 -= dist.p(0, l) * std::log(dist.p(0, l));
        CHECK(sem_loss(dist, two) ==
              doctest::Approx(0.5 * (h0 + std::log(4.0))).epsilon(1e-12));
    }
    SUBCASE("empty active set returns zero") {
        CHECK(sem_loss(dist, ActiveSet{}) == 0.0);
    }
}

TEST_CASE("overlap_loss limits") {
    SpatialDistribution dist;
    dist.height = 1;
    dist.width = 4;
    dist.p.resize(2, 4);

    SUBCASE("identical maps give cosine one") {
        dist.p.row(0) << 0.4, 0.3, 0.2, 0.1;
        dist.p.row(1) << 0.4, 0.3, 0.2, 0.1;
        ActiveSet act;
        act.indices = {0, 1};
        CHECK(overlap_loss(dist, act) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("disjoint dominant mass approaches zero") {
        const double eps = 1e-9;
        dist.p.row(0) << 1.0 - 3 * eps, eps, eps, eps;
        dist.p.row(1) << eps, 1.0 - 3 * eps, eps, eps;
        ActiveSet act;
        act.indices = {0, 1};
        CHECK(overlap_loss(dist, act) < 1e-6);
        CHECK(overlap_loss(dist, act) >= 0.0);
    }
    SUBCASE("fewer than two active directions give zero") {
        dist.p.row(0) << 0.4, 0.3, 0.2, 0.1;
        dist.p.row(1) << 0.1, 0.2, 0.3, 0.4;
        ActiveSet act;
        act.indices = {1};
        CHECK(overlap_loss(dist, act) == 0.0);
        CHECK(overlap_loss(dist, ActiveSet{}) == 0.0);
    }
}

namespace {

std::vector<ClassSubspace> random_subspaces(int classes, int depth, int k,
                                            std::uint64_t seed) {
    std::vector<ClassSubspace> subs;
    Rng rng(seed);
    for (int c = 0; c < classes; ++c) {
        Vector sigma(k);
        for (int i = 0; i < k; ++i)
            sigma(i) = rng.uniform(0.1, 1.5);
        subs.emplace_back(random_stiefel(depth, k, seed + 1000 + c), sigma);
    }
    return subs;
}

} // namespace

TEST_CASE("class_logits reduces to projection_energy on a single location") {
    const auto subs = random_subspaces(3, 6, 2, 131);
    const FeatureTensor f = random_features(6, 1, 1, 132);
    const LogitRecord rec = class_logits(f, subs);
    for (int c = 0; c < 3; ++c)
        CHECK(rec.logits(c) ==
              doctest::Approx(projection_energy(f.values.col(0), subs[c])).epsilon(1e-12));
}

TEST_CASE("class_logits pools the maximum response") {
    // One direction, two locations with responses 2 and 3: the pooled
    // energy must be 9 regardless of order.
    Matrix basis = Matrix::Zero(2, 1);
    basis(0, 0) = 1.0;
    Vector sigma = Vector::Ones(1);
    std::vector<ClassSubspace> subs;
    subs.emplace_back(StiefelPoint(basis), sigma);

    FeatureTensor f(2, 1, 2);
    f.values << 2.0, 3.0, 0.0, 0.0;
    const LogitRecord rec = class_logits(f, subs);
    CHECK(rec.logits(0) == doctest::Approx(9.0).epsilon(1e-14));
    CHECK(rec.argmax[0](0) == 1);
    CHECK(rec.pooled[0](0) == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("class_logits matches the exhaustive oracle") {
    const auto subs = random_subspaces(5, 7, 3, 141);
    const FeatureTensor f = random_features(7, 4, 5, 142);
    const LogitRecord rec = class_logits(f, subs);
    for (int c = 0; c < 5; ++c) {
        double z = 0.0;
        for (int k = 0; k < 3; ++k) {
            double best = -1.0;
            for (int l = 0; l < 20; ++l) {
                const double a = subs[c].basis.basis().col(k).dot(f.values.col(l));
                best = std::max(best, a * a);
            }
            z += subs[c].capacity(k) * best;
        }
        CHECK(rec.logits(c) == doctest::Approx(z).epsilon(1e-12));
        CHECK(rec.logits(c) >= 0.0);
    }
}

TEST_CASE("cross_entropy of uniform logits is ln C") {
    CHECK(cross_entropy(Vector::Constant(7, 3.25), 2) ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(Vector::Zero(3), 3), BadLabel);
}

TEST_CASE("total_loss reduces to ce with zero weights") {
    const auto subs = random_subspaces(4, 6, 3, 151);
    const FeatureTensor f = random_features(6, 3, 3, 152);
    LossWeights w;
    w.gamma1 = w.gamma2 = w.lambda = 0.0;
    const LossBreakdown b = total_loss(f, 1, subs, w);
    CHECK(b.total == b.ce);
    CHECK(b.ce >= 0.0);
}

TEST_CASE("total_loss breakdown identity and independent recomputation") {
    const auto subs = random_subspaces(4, 6, 3, 161);
    const FeatureTensor f = random_features(6, 3, 3, 162);
    LossWeights w; // defaults: lambda 1e-4, gammas 0.01
    const LossBreakdown b = total_loss(f, 2, subs, w);

    CHECK(std::abs(b.total - (b.ce + w.gamma1 * b.sem + w.gamma2 * b.overlap +
                              w.lambda * b.sparse)) <= 1e-12);

    // Recompute every term through the public pieces.
    const LogitRecord rec = class_logits(f, subs);
    CHECK(b.ce == doctest::Approx(cross_entropy(rec.logits, 2)).epsilon(1e-14));
    const ActiveSet act = active_set(subs[2].capacity);
    const SpatialDistribution dist = spatial_softmax(response_map(f, subs[2], false));
    CHECK(b.sem == doctest::Approx(sem_loss(dist, act)).epsilon(1e-14));
    CHECK(b.overlap == doctest::Approx(overlap_loss(dist, act)).epsilon(1e-14));
    double sparse = 0.0;
    for (const ClassSubspace& sub : subs)
        sparse += sub.capacity.sum();
    CHECK(b.sparse == doctest::Approx(sparse).epsilon(1e-14));

    CHECK(b.predicted_class >= 0);
    int best = 0;
    for (int c = 1; c < 4; ++c)
        if (b.logits(c) > b.logits(best))
            best = c;
    CHECK(b.predicted_class == best);

    CHECK_THROWS_AS(total_loss(f, 4, subs, w), BadLabel);
}

TEST_CASE("per-location isotropic energy is gauge invariant") {
    const StiefelPoint u = random_stiefel(8, 3, 171);
    const Vector ones = Vector::Ones(3);
    Rng rng(172);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix q = qr_factor(random_matrix(3, 3, rng.next())).q;
        const StiefelPoint rotated{u.basis() * q};
        Vector f(8);
        for (int d = 0; d < 8; ++d)
            f(d) = rng.normal();
        const double e1 = projection_energy(f, ClassSubspace{u, ones});
        const double e2 = projection_energy(f, ClassSubspace{rotated, ones});
        CHECK(std::abs(e1 - e2) <= 1e-10);
    }
}

TEST_CASE("zeroed directions are inert") {
    // Build K=3 subspace, zero direction 1, and compare against the K=2
    // subspace with that column removed.
    const StiefelPoint u3 = random_stiefel(6, 3, 181);
    Vector sigma3(3);
    sigma3 << 0.8, 0.0, 1.2;
    Matrix u2m(6, 2);
    u2m.col(0) = u3.basis().col(0);
    u2m.col(1) = u3.basis().col(2);
    Vector sigma2(2);
    sigma2 << 0.8, 1.2;

    std::vector<ClassSubspace> full{ClassSubspace{u3, sigma3}};
    std::vector<ClassSubspace> reduced{ClassSubspace{StiefelPoint(u2m), sigma2}};
    const FeatureTensor f = random_features(6, 3, 3, 182);

    const LogitRecord rec_full = class_logits(f, full);
    const LogitRecord rec_reduced = class_logits(f, reduced);
    CHECK(rec_full.logits(0) == doctest::Approx(rec_reduced.logits(0)).epsilon(1e-12));

    const ActiveSet act_full = active_set(sigma3);
    const ActiveSet act_reduced = active_set(sigma2);
    const SpatialDistribution dist_full = spatial_softmax(response_map(f, full[0], false));
    const SpatialDistribution dist_reduced =
        spatial_softmax(response_map(f, reduced[0], false));
    CHECK(sem_loss(dist_full, act_full) ==
          doctest::Approx(sem_loss(dist_reduced, act_reduced)).epsilon(1e-12));
    CHECK(overlap_loss(dist_full, act_full) ==
          doctest::Approx(overlap_loss(dist_reduced, act_reduced)).epsilon(1e-12));
}

TEST_CASE("logits are monotone in capacity") {
    const auto subs = random_subspaces(2, 6, 3, 191);
    const FeatureTensor f = random_features(6, 3, 3, 192);
    const LogitRecord rec = class_logits(f, subs);
    Vector bumped = subs[0].capacity;
    bumped(1) += 0.5;
    std::vector<ClassSubspace> subs2;
    subs2.emplace_back(subs[0].basis, bumped);
    subs2.emplace_back(subs[1].basis, subs[1].capacity);
    const LogitRecord rec2 = class_logits(f, subs2);
    CHECK(rec2.logits(0) >= rec.logits(0));
}
