#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "affagg/simulation.hpp"

using namespace affagg;

namespace {

TrialSetup small_setup(std::size_t trials) {
    TrialSetup s;
    auto fam = std::make_shared<std::vector<AffineEstimator>>();
    for (int j = 1; j <= 5; ++j) fam->push_back(AffineEstimator::scaled_identity(30, 0.2 * j));
    s.family = fam;
    s.f = Vector::LinSpaced(30, -1.0, 1.0);
    s.noise.sigma = 0.5;
    s.sigma2 = 0.25;
    s.trials = trials;
    s.base_seed = 77;
    return s;
}

}  // namespace

TEST_CASE("rng streams are deterministic") {
    Rng a(5);
    Rng b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    Rng c(6);
    CHECK(Rng(5).uniform() != c.uniform());
    Rng d(1);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t k = d.index(3, 7);
        CHECK(k >= 3);
        CHECK(k <= 7);
    }
}

TEST_CASE("gen_noise") {
    NoiseModel g;
    g.sigma = 1.5;
    CHECK(gen_noise(g, 50, 9) == gen_noise(g, 50, 9));
    CHECK(gen_noise(g, 50, 9) != gen_noise(g, 50, 10));

    const Vector big = gen_noise(g, 1000000, 1);
    const double mean = big.mean();
    const double var = (big.array() - mean).square().sum() / static_cast<double>(big.size() - 1);
    CHECK(std::abs(var / (g.sigma * g.sigma) - 1.0) < 0.01);
    CHECK(std::abs(mean) < 0.01);

    NoiseModel r;
    r.kind = NoiseKind::rademacher;
    r.sigma = 0.7;
    const Vector rv = gen_noise(r, 1000, 2);
    for (Eigen::Index i = 0; i < rv.size(); ++i) CHECK(std::abs(rv(i)) == doctest::Approx(0.7));

    NoiseModel u;
    u.kind = NoiseKind::uniform;
    u.sigma = 2.0;
    const Vector uv = gen_noise(u, 200000, 3);
    CHECK(uv.cwiseAbs().maxCoeff() <= 2.0 * std::sqrt(3.0));
    CHECK(std::abs(uv.squaredNorm() / static_cast<double>(uv.size()) / 4.0 - 1.0) < 0.02);

    for (auto k : {NoiseKind::gaussian, NoiseKind::rademacher, NoiseKind::uniform}) {
        CHECK(noise_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS(noise_kind_from_string("cauchy"));
}

TEST_CASE("run_trials") {
    CHECK(run_trials(small_setup(0)).empty());

    const auto a = run_trials(small_setup(40));
    auto s3 = small_setup(40);
    s3.threads = 3;
    const auto b = run_trials(s3);
    REQUIRE(a.size() == 40);
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].ok());
        CHECK(a[t].seed == 77 + t);
        CHECK(a[t].risk == b[t].risk);
        CHECK(a[t].role_slack == b[t].role_slack);
        CHECK(a[t].role_holds());
        CHECK(a[t].excess_risk == doctest::Approx(a[t].risk - a[t].oracle_risk));
    }

    // Identical estimators: nothing is lost by aggregating.
    auto same = small_setup(20);
    same.family = std::make_shared<std::vector<AffineEstimator>>(3, AffineEstimator::scaled_identity(30, 0.6));
    for (const auto& r : run_trials(same)) CHECK(std::abs(r.excess_risk) <= 10.0 * r.tol);
}

TEST_CASE("per-trial errors are recorded") {
    auto s = small_setup(3);
    s.objective = ObjectiveKind::v_pen;  // no prior supplied
    const auto recs = run_trials(s);
    REQUIRE(recs.size() == 3);
    for (const auto& r : recs) CHECK_FALSE(r.ok());
}

TEST_CASE("parallel_for covers every index once") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
}

TEST_CASE("Wilson upper bound") {
    CHECK(wilson_upper(0, 100) > 0.0);
    CHECK(wilson_upper(100, 100) == doctest::Approx(1.0));
    double prev = 0.0;
    for (std::size_t k = 0; k <= 50; ++k) {
        const double w = wilson_upper(k, 50);
        CHECK(w >= prev);
        CHECK(w >= static_cast<double>(k) / 50.0);
        prev = w;
    }
    // Closed form at k = 0: z^2 / (n + z^2).
    const double z = kWilsonZ;
    CHECK(wilson_upper(0, 1000) == doctest::Approx(z * z / (1000 + z * z)));
    CHECK_THROWS(wilson_upper(3, 2));
}

TEST_CASE("tail_check") {
    std::vector<double> v(200);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    const auto tail = [](double x) { return 2.0 * std::exp(-x); };
    const double inf = std::numeric_limits<double>::infinity();

    const TailCheckReport hi = tail_check(v, [&](double) { return inf; }, {1.0, 2.0}, tail);
    CHECK(hi.exceed_count[0] == 0);
    CHECK(hi.all_pass());

    const TailCheckReport lo = tail_check(v, [&](double) { return -inf; }, {1.0, 2.0}, tail);
    CHECK(lo.empirical_exceed[0] == 1.0);
    CHECK_FALSE(lo.pass[0]);

    const TailCheckReport mid = tail_check(v, [](double x) { return 100.0 * x; }, {1.0}, tail);
    CHECK(mid.exceed_count[0] == 99);

    std::vector<double> with_nan(v);
    with_nan[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK(tail_check(with_nan, [&](double) { return inf; }, {1.0}, tail).exceed_count[0] == 1);

    CHECK_THROWS(tail_check(std::vector<double>(99, 0.0), [](double) { return 1.0; }, {1.0}, tail));
}

TEST_CASE("mean summary and median") {
    const MeanSummary m = mean_summary({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(m.upper == doctest::Approx(m.mean + kWilsonZ * m.std_error));
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("expectation identity") {
    NoiseModel g;
    g.sigma = 0.8;
    const std::size_t n = 12;
    const auto a = AffineEstimator::scaled_identity(n, 0.4);
    const IdentityCheckReport zero = expectation_identity_check(a, a, Vector::Ones(n), g, 1000, 1);
    CHECK(zero.closed_form == 0.0);
    CHECK(zero.mc_mean == 0.0);

    const IdentityCheckReport chi = expectation_identity_check(AffineEstimator::scaled_identity(n, 1.0), AffineEstimator::zero(n),
                                                               Vector::Zero(n), g, 1000, 2);
    CHECK(chi.closed_form == doctest::Approx(0.5 * 0.64 * n));

    Rng rng(3);
    Matrix m1 = rng.normal_matrix(n, n);
    m1 /= dense_operator_norm(m1);
    const auto e1 = AffineEstimator::dense(m1, rng.normal_vector(n));
    const auto e2 = AffineEstimator::diagonal(rng.normal_vector(n).cwiseAbs().cwiseMin(1.0));
    const IdentityCheckReport r = expectation_identity_check(e1, e2, rng.normal_vector(n), g, 100000, 4);
    CHECK(std::abs(r.z_score) <= 4.0);
}

TEST_CASE("concentration checks") {
    NoiseModel g;
    const std::size_t n = 10;
    const TailCheckReport z = chaos_tail_check(Matrix::Zero(n, n), g, 10000, {1.0, 2.0}, 1);
    CHECK(z.exceed_count[0] == 0);
    CHECK(z.all_pass());

    const TailCheckReport chi = chaos_tail_check(Matrix::Identity(n, n), g, 20000, {1.0}, 2);
    CHECK(chi.all_pass());
    CHECK(chi.empirical_exceed[0] <= std::exp(-1.0));

    Rng rng(4);
    Matrix aj = rng.normal_matrix(n, n);
    aj /= dense_operator_norm(aj);
    Matrix ak = rng.normal_matrix(n, n);
    ak /= dense_operator_norm(ak);
    CHECK(chaos_tail_check(2.0 * (ak - aj), g, 20000, {1.0, 2.0, 4.0}, 3).all_pass());

    CHECK(linear_tail_check(Vector::Zero(n), g, 10000, {1.0}, 5).exceed_count[0] == 0);
    Vector e1 = Vector::Zero(n);
    e1(0) = 1.0;
    const TailCheckReport lin = linear_tail_check(e1, g, 50000, {2.0}, 6);
    CHECK(lin.all_pass());
    CHECK(lin.empirical_exceed[0] <= std::exp(-2.0) + 0.01);

    NoiseModel r;
    r.kind = NoiseKind::rademacher;
    CHECK(linear_tail_check(rng.normal_vector(n), r, 20000, {1.0, 2.0}, 7).all_pass());
    CHECK(chaos_tail_check(rng.normal_matrix(n, n), r, 20000, {1.0, 2.0}, 8, ChaosForm::hanson).all_pass());
    CHECK(chaos_tail_check(rng.normal_matrix(n, n), r, 20000, {1.0, 2.0}, 9, ChaosForm::hsu).all_pass());

    // Same seed, different thread counts.
    const TailCheckReport t1 = chaos_tail_check(Matrix::Identity(n, n), g, 5000, {0.5}, 10, ChaosForm::gaussian, 1);
    const TailCheckReport t3 = chaos_tail_check(Matrix::Identity(n, n), g, 5000, {0.5}, 10, ChaosForm::gaussian, 3);
    CHECK(t1.exceed_count == t3.exceed_count);
}

TEST_CASE("strong convexity probe") {
    Rng rng(11);
    std::vector<AffineEstimator> fam{AffineEstimator::scaled_identity(8, 0.3), AffineEstimator::diagonal(rng.normal_vector(8).cwiseAbs().cwiseMin(1.0)),
                                     AffineEstimator::zero(8, rng.normal_vector(8))};
    const EstimatorBank bank(fam, rng.normal_vector(8));
    CHECK(strong_convexity_probe(ObjectiveSpec::h_pen(1.0), bank, 1000, 1) <= 1e-9);
    CHECK(strong_convexity_probe(ObjectiveSpec::cp(1.0), bank, 1000, 2) <= 1e-9);
    CHECK(strong_convexity_probe(ObjectiveSpec::u(0.5, Prior::uniform(3)), bank, 1000, 3) <= 1e-9);
}

TEST_CASE("identity suite") {
    const IdentitySuiteReport r = identity_suite(200, 1, 20, 6);
    CHECK(r.instances == 200);
    CHECK(r.max() <= 1e-9);
}

TEST_CASE("random simplex points") {
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const SimplexPoint p = random_simplex_point(rng, 7);
        CHECK(p.weights().sum() == doctest::Approx(1.0));
        CHECK(p.weights().minCoeff() >= 0.0);
    }
}
