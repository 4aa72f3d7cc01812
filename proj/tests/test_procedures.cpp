#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "affagg/procedures.hpp"
#include "affagg/simplex_qp.hpp"
#include "affagg/simulation.hpp"

using namespace affagg;

namespace {

std::vector<AffineEstimator> random_family(Rng& rng, std::size_t n, std::size_t M) {
    std::vector<AffineEstimator> fam;
    for (std::size_t j = 0; j < M; ++j) {
        if (j % 2 == 0) {
            fam.push_back(AffineEstimator::diagonal(rng.normal_vector(n).cwiseAbs().cwiseMin(1.0)));
        } else {
            Matrix a = rng.normal_matrix(n, n);
            a *= 0.9 / dense_operator_norm(a);
            fam.push_back(AffineEstimator::dense(a, 0.2 * rng.normal_vector(n)));
        }
    }
    return fam;
}

double vertex_min(const EstimatorBank& bank, const ObjectiveSpec& spec) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.size(); ++j) best = std::min(best, evaluate(bank, spec, SimplexPoint::vertex(bank.size(), j)));
    return best;
}

}  // namespace

TEST_CASE("fitted is the weighted sum of fits") {
    Rng rng(1);
    const EstimatorBank bank(random_family(rng, 8, 5), rng.normal_vector(8));
    const AggregateOutput out = q_aggregate(bank, 1.0);
    CHECK((out.fitted - bank.fits() * out.theta.weights()).norm() < 1e-9);
    CHECK(out.objective_kind == ObjectiveKind::h_pen);
    CHECK(out.solve.objective <= vertex_min(bank, ObjectiveSpec::h_pen(1.0)) + 1e-9);
}

TEST_CASE("identical estimators") {
    Rng rng(2);
    std::vector<AffineEstimator> fam(2, AffineEstimator::scaled_identity(5, 0.5));
    const EstimatorBank bank(fam, rng.normal_vector(5));
    CHECK((q_aggregate(bank, 1.0).fitted - Vector(bank.fit(0))).norm() < 1e-12);
    CHECK((cp_minimize(bank, 1.0).fitted - Vector(bank.fit(0))).norm() < 1e-12);
    CHECK(erm_cp_select(bank, 1.0) == 0);
}

TEST_CASE("offset-only bank with one offset equal to y") {
    Rng rng(3);
    const std::size_t n = 6;
    const Vector y = rng.normal_vector(n);
    std::vector<AffineEstimator> fam{AffineEstimator::zero(n, rng.normal_vector(n)), AffineEstimator::zero(n, y),
                                     AffineEstimator::zero(n, rng.normal_vector(n))};
    const EstimatorBank bank(fam, y);
    const AggregateOutput out = q_aggregate(bank, 0.0);
    const SolveResult grid = brute_force_grid(qp_reduce(bank, ObjectiveSpec::h_pen(0.0)), 0.01);
    CHECK(grid.theta[1] == 1.0);
    CHECK(out.theta[1] == doctest::Approx(1.0));
    CHECK(out.solve.objective == doctest::Approx(-y.squaredNorm()));
    CHECK(erm_cp_select(bank, 0.0) == 1);
}

TEST_CASE("inadmissible estimators warn") {
    Rng rng(4);
    std::vector<AffineEstimator> fam{AffineEstimator::scaled_identity(4, 2.0), AffineEstimator::scaled_identity(4, 0.5)};
    const EstimatorBank bank(fam, rng.normal_vector(4));
    CHECK_FALSE(q_aggregate(bank, 1.0).warnings.empty());
    CHECK_FALSE(q_aggregate_plugin_variance(bank, 1.0).warnings.empty());
}

TEST_CASE("prior-weighted aggregation") {
    Rng rng(5);
    const EstimatorBank bank(random_family(rng, 8, 4), rng.normal_vector(8));
    const AggregateOutput plain = q_aggregate(bank, 0.7);
    const AggregateOutput uni = q_aggregate_prior(bank, 0.7, Prior::uniform(4));
    CHECK(uni.objective_kind == ObjectiveKind::v_pen);
    CHECK(uni.solve.objective - plain.solve.objective == doctest::Approx(46.0 * 0.7 * std::log(4.0)).epsilon(1e-7));

    // Comparable fits and a prior concentrated on the first estimator.
    const std::size_t n = 10;
    const Vector y = rng.normal_vector(n);
    std::vector<AffineEstimator> close{AffineEstimator::scaled_identity(n, 0.50), AffineEstimator::scaled_identity(n, 0.52),
                                       AffineEstimator::scaled_identity(n, 0.48)};
    const EstimatorBank cb(close, y);
    const double eps = 1e-6;
    Vector pi(3);
    pi << 1 - 2 * eps, eps, eps;
    const Prior prior(pi);
    const AggregateOutput out = q_aggregate_prior(cb, 1.0, prior);
    const SolveResult grid = brute_force_grid(qp_reduce(cb, ObjectiveSpec::v_pen(1.0, prior)), 0.01);
    CHECK(out.theta[0] > 0.99);
    CHECK(grid.theta[0] > 0.99);
    CHECK(out.solve.objective <= grid.objective + 1e-9);

    // Symmetric pair with a symmetric prior.
    std::vector<AffineEstimator> sym{AffineEstimator::diagonal((Vector(2) << 1.0, 0.0).finished()),
                                     AffineEstimator::diagonal((Vector(2) << 0.0, 1.0).finished())};
    const EstimatorBank sb(sym, Vector::Ones(2));
    const AggregateOutput so = q_aggregate_prior(sb, 1.0, Prior::uniform(2));
    CHECK(so.theta[0] == doctest::Approx(0.5));
}

TEST_CASE("plug-in variance") {
    Rng rng(6);
    const Matrix x = rng.normal_matrix(12, 4);
    std::vector<AffineEstimator> proj;
    for (std::size_t j = 1; j <= 4; ++j) {
        std::vector<std::size_t> cols;
        for (std::size_t c = 0; c < j; ++c) cols.push_back(c);
        proj.push_back(make_projection(x, cols).estimator);
    }
    const EstimatorBank bank(proj, rng.normal_vector(12));
    const AggregateOutput a = q_aggregate(bank, 0.8);
    const AggregateOutput b = q_aggregate_plugin_variance(bank, 0.8);
    CHECK(b.warnings.empty());
    CHECK(b.objective_kind == ObjectiveKind::w_pen);
    CHECK(a.solve.objective == doctest::Approx(b.solve.objective).epsilon(1e-10));
    CHECK((a.fitted - b.fitted).norm() < 1e-6);

    // Equal traces: the trace term is constant on the simplex.
    std::vector<AffineEstimator> eq;
    for (std::size_t c = 0; c < 4; ++c) eq.push_back(make_projection(x, std::vector<std::size_t>{c}).estimator);
    const EstimatorBank eb(eq, rng.normal_vector(12));
    const AggregateOutput lo = q_aggregate_plugin_variance(eb, 0.1);
    const AggregateOutput hi = q_aggregate_plugin_variance(eb, 5.0);
    CHECK((lo.fitted - hi.fitted).norm() < 1e-6);

    std::vector<AffineEstimator> notproj{AffineEstimator::scaled_identity(12, 0.5), proj[0]};
    CHECK_FALSE(q_aggregate_plugin_variance(EstimatorBank(notproj, rng.normal_vector(12)), 1.0).warnings.empty());
}

TEST_CASE("subgaussian alias is the same estimator") {
    Rng rng(7);
    const EstimatorBank bank(random_family(rng, 7, 4), rng.normal_vector(7));
    const AggregateOutput a = q_aggregate(bank, 0.5);
    const AggregateOutput b = q_aggregate_subgaussian(bank, 0.5);
    CHECK(a.theta.weights() == b.theta.weights());
    CHECK(a.fitted == b.fitted);

    NoiseModel rad;
    rad.kind = NoiseKind::rademacher;
    const Vector f = rng.normal_vector(7);
    const EstimatorBank rb(random_family(rng, 7, 4), f + gen_noise(rad, 7, 3));
    CHECK(q_aggregate_subgaussian(rb, 1.0).solve.converged);
}

TEST_CASE("ERM selection") {
    Rng rng(8);
    const std::size_t n = 5;
    const Vector y = rng.normal_vector(n);
    std::vector<AffineEstimator> fam{AffineEstimator::scaled_identity(n, 0.3), AffineEstimator::scaled_identity(n, 1.0),
                                     AffineEstimator::zero(n)};
    const EstimatorBank bank(fam, y);
    std::size_t expect = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < 3; ++j) {
        const double v = cp_criterion(bank, 0.0, SimplexPoint::vertex(3, j));
        if (v < best) {
            best = v;
            expect = j;
        }
    }
    CHECK(erm_cp_select(bank, 0.0) == expect);
    CHECK(expect == 1);

    std::vector<AffineEstimator> two{AffineEstimator::scaled_identity(n, 1.0), AffineEstimator::zero(n)};
    const EstimatorBank tb(two, y);
    REQUIRE(cp_criterion(tb, 0.0, SimplexPoint::vertex(2, 0)) < cp_criterion(tb, 0.0, SimplexPoint::vertex(2, 1)));
    CHECK(erm_cp_select(tb, 0.0) == 0);
}

TEST_CASE("Cp minimisation") {
    Rng rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        const EstimatorBank bank(random_family(rng, 6, 3), rng.normal_vector(6));
        const AggregateOutput c = cp_minimize(bank, 0.5);
        const AggregateOutput h = q_aggregate(bank, 0.5);
        CHECK(c.objective_kind == ObjectiveKind::cp);
        CHECK(cp_criterion(bank, 0.5, c.theta) <= cp_criterion(bank, 0.5, h.theta) + 1e-9);
        const SolveResult grid = brute_force_grid(qp_reduce(bank, ObjectiveSpec::cp(0.5)), 0.01);
        CHECK(c.solve.objective <= grid.objective + 1e-9);
        CHECK(grid.objective - c.solve.objective < 0.05 * std::max(1.0, std::abs(c.solve.objective)));
    }
}

TEST_CASE("Maurey grid") {
    CHECK(maurey_m(10, 100) == static_cast<std::size_t>(std::floor(std::sqrt(100.0 / std::log1p(10.0 / 10.0)))));
    const MaureyGrid g = maurey_grid(2, 2);
    REQUIRE(g.size() == 3);
    std::set<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < 3; ++i) pts.insert({g.points(static_cast<Eigen::Index>(i), 0), g.points(static_cast<Eigen::Index>(i), 1)});
    CHECK(pts == std::set<std::pair<double, double>>{{1.0, 0.0}, {0.5, 0.5}, {0.0, 1.0}});
    CHECK(maurey_grid(3, 2).size() == 6);

    for (std::size_t M = 1; M <= 10; ++M) {
        for (std::size_t m = 1; m <= 5; ++m) {
            const MaureyGrid grid = maurey_grid(M, m);
            CHECK(grid.size() == maurey_grid_count(M, m));
            CHECK(static_cast<double>(grid.size()) == binomial(M + m - 1, m));
            CHECK(std::log(static_cast<double>(grid.size())) <= m * std::log(2.0 * std::exp(1.0) * M / m) + 1e-12);
            std::set<std::vector<long>> seen;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                std::vector<long> c;
                for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(M); ++j) {
                    const double v = grid.points(static_cast<Eigen::Index>(i), j) * static_cast<double>(m);
                    CHECK(std::abs(v - std::round(v)) < 1e-12);
                    c.push_back(std::lround(v));
                }
                seen.insert(c);
            }
            CHECK(seen.size() == grid.size());
        }
    }
    CHECK_THROWS_AS(maurey_grid(3, 0), DomainError);
    CHECK_THROWS_AS(maurey_grid(50, 10, 1000), CapacityError);
}

TEST_CASE("convex aggregation") {
    Rng rng(10);
    const Vector y = rng.normal_vector(6);
    std::vector<AffineEstimator> single{AffineEstimator::scaled_identity(6, 0.4)};
    const EstimatorBank one(single, y);
    const ConvexAggregateOutput pass = convex_aggregate(one, 1.0);
    CHECK((pass.grid_output.fitted - Vector(one.fit(0))).norm() < 1e-12);
    CHECK(pass.theta[0] == 1.0);

    const auto fam = random_family(rng, 6, 3);
    const EstimatorBank bank(fam, y);
    ConvexOptions opts;
    opts.m = 4;
    const ConvexAggregateOutput out = convex_aggregate(bank, 1.0, opts);
    CHECK(out.grid.size() == 15);
    CHECK(out.grid_output.solve.objective <= vertex_min(bank, ObjectiveSpec::h_pen(1.0)) + 1e-9);
    CHECK((out.grid_output.fitted - bank.fits() * out.theta.weights()).norm() < 1e-9);

    // Grid estimators are convex combinations, so their operator norm is at most the largest one.
    double max_norm = 0.0;
    for (const auto& e : fam) max_norm = std::max(max_norm, e.operator_norm());
    const EstimatorBank mixed = EstimatorBank::mixture(bank, out.grid.points);
    for (std::size_t u = 0; u < mixed.size(); u += 3) CHECK(mixed.estimator(u).operator_norm() <= max_norm + 1e-8);
}

TEST_CASE("Maurey gap") {
    Rng rng(11);
    const QPProblem flat{Matrix::Zero(3, 3), Vector::Constant(3, 2.0), 1.0};
    CHECK(maurey_gap(flat, maurey_grid(3, 2)) == doctest::Approx(0.0));
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix l = rng.normal_matrix(4, 4);
        const QPProblem q{2.0 * l * l.transpose(), rng.normal_vector(4), 0.0};
        const double sigma_max = 0.5 * q.gram.diagonal().maxCoeff();
        for (std::size_t m : {1, 3}) {
            const double gap = maurey_gap(q, maurey_grid(4, m));
            CHECK(gap >= -1e-9);
            CHECK(gap <= 4.0 * sigma_max / static_cast<double>(m) + 1e-8);
            CHECK(maurey_bound(q, m) == doctest::Approx(4.0 * sigma_max / static_cast<double>(m)));
        }
        // m = 1 is the vertex minimum.
        double vmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < 4; ++j) vmin = std::min(vmin, 0.5 * q.gram(j, j) + q.lin(j));
        CHECK(maurey_gap(q, maurey_grid(4, 1)) == doctest::Approx(vmin - solve_qp(q).objective).epsilon(1e-9));
    }
}

TEST_CASE("sparsity prior and aggregation") {
    Matrix x1(5, 1);
    x1 << 1, 2, 3, 4, 5;
    const SparsitySpec s1 = make_sparsity_spec(x1, 1, 1.0);
    REQUIRE(s1.supports.size() == 2);
    CHECK(s1.supports[0].empty());
    const double z = 1.0 + std::exp(-1.0);
    CHECK(s1.prior.pi()(0) == doctest::Approx(1.0 / z));
    CHECK(s1.prior.pi()(1) == doctest::Approx(std::exp(-1.0) / z));

    Rng rng(12);
    const Matrix x = rng.normal_matrix(20, 4);
    const SparsitySpec spec = make_sparsity_spec(x, 2, 1e-4);
    CHECK(spec.supports.size() == 1 + 4 + 6);
    for (std::size_t i = 2; i <= 4; ++i) CHECK(spec.prior.pi()(static_cast<Eigen::Index>(i)) == doctest::Approx(spec.prior.pi()(1)));

    // Zero noise with y in the span of columns {1, 3}.
    const Vector y = 2.0 * x.col(1) - x.col(3);
    const AggregateOutput out = sparsity_pattern_aggregate(spec, y);
    CHECK(out.objective_kind == ObjectiveKind::u);
    CHECK((out.fitted - y).norm() < 1e-3 * y.norm());
    const EstimatorBank bank(spec.projectors, y);
    const SolveResult grid_best = solve_qp(qp_reduce(bank, ObjectiveSpec::u(1e-4, spec.prior)));
    CHECK(out.solve.objective <= grid_best.objective + 1e-9);
}

TEST_CASE("k-regressors") {
    Rng rng(13);
    const Matrix x = rng.normal_matrix(10, 3);
    const KRegressorFamily all = make_kregressor_family(x, 3);
    CHECK(all.projectors->size() == 1);
    const Vector y = rng.normal_vector(10);
    const AggregateOutput pass = kregressor_aggregate(x, 3, y, 1.0);
    CHECK((pass.fitted - all.projectors->front().apply(y)).norm() < 1e-10);

    const KRegressorFamily pairs = make_kregressor_family(x, 2);
    CHECK(pairs.projectors->size() == 3);

    // Equal traces: changing sigma^2 does not change the fit.
    const AggregateOutput a = kregressor_aggregate(x, 1, y, 0.1);
    const AggregateOutput b = kregressor_aggregate(x, 1, y, 10.0);
    CHECK((a.fitted - b.fitted).norm() < 1e-6);

    const std::size_t n = 8;
    const Matrix eye = Matrix::Identity(n, n);
    Vector f = Vector::Zero(n);
    f(0) = 5.0;
    NoiseModel small;
    small.sigma = 0.1;
    int hits = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const AggregateOutput out = kregressor_aggregate(eye, 1, f + gen_noise(small, n, 500 + t), 0.01);
        Eigen::Index arg = 0;
        out.theta.weights().maxCoeff(&arg);
        if (arg == 0) ++hits;
    }
    CHECK(hits > 50);
}

TEST_CASE("deterministic oracle inequality") {
    Rng rng(14);
    const std::size_t n = 9;
    for (int rep = 0; rep < 50; ++rep) {
        const auto fam = random_family(rng, n, 5);
        const Vector f = rng.normal_vector(n);
        const Vector xi = rng.normal_vector(n);
        const EstimatorBank bank(fam, f + xi);
        const Prior prior = Prior::uniform(5);
        for (const ObjectiveSpec& spec : {ObjectiveSpec::cp(1.0), ObjectiveSpec::h_pen(1.0), ObjectiveSpec::v_pen(1.0, prior),
                                          ObjectiveSpec::w_pen(1.3), ObjectiveSpec::u(1.0, prior)}) {
            const AggregateOutput out = aggregate(bank, spec);
            REQUIRE(out.solve.converged);
            const OracleBound b = oracle_bound(bank, spec, out.fitted, f, xi);
            CHECK(b.lhs == doctest::Approx((out.fitted - f).squaredNorm()));
            CHECK(b.lhs <= b.rhs() + 10.0 * default_tolerance(qp_reduce(bank, spec)));
        }
        // For H_pen the pair term is Delta_jk - ||mu_j - mu_k||^2 / 2.
        double pair = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < 5; ++j) {
            for (std::size_t k = 0; k < 5; ++k) {
                pair = std::max(pair, delta_jk(bank, f, xi, 1.0, j, k) - 0.5 * (Vector(bank.fit(j)) - Vector(bank.fit(k))).squaredNorm());
            }
        }
        const AggregateOutput h = q_aggregate(bank, 1.0);
        CHECK(oracle_bound(bank, ObjectiveSpec::h_pen(1.0), h.fitted, f, xi).max_pair_term == doctest::Approx(pair));
    }
}
