#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "affagg/simplex_qp.hpp"
#include "affagg/simulation.hpp"

using namespace affagg;

namespace {

QPProblem random_problem(Rng& rng, std::size_t M, std::size_t rank) {
    const Matrix l = rng.normal_matrix(M, rank);
    return QPProblem{l * l.transpose(), rng.normal_vector(M), 0.0};
}

// Minimum over the simplex by enumerating every support and solving the
// equality-constrained KKT system on it. Exact for small M.
double exact_minimum(const QPProblem& q) {
    const auto M = static_cast<Eigen::Index>(q.size());
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << M); ++mask) {
        std::vector<Eigen::Index> s;
        for (Eigen::Index j = 0; j < M; ++j) {
            if (mask & (1u << j)) s.push_back(j);
        }
        const auto k = static_cast<Eigen::Index>(s.size());
        Matrix kkt = Matrix::Zero(k + 1, k + 1);
        Vector rhs(k + 1);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = q.gram(s[a], s[b]);
            kkt(a, k) = 1.0;
            kkt(k, a) = 1.0;
            rhs(a) = -q.lin(s[a]);
        }
        rhs(k) = 1.0;
        const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
        if ((kkt * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) continue;
        Vector theta = Vector::Zero(M);
        bool ok = true;
        for (Eigen::Index a = 0; a < k; ++a) {
            if (sol(a) < -1e-12) ok = false;
            theta(s[a]) = std::max(0.0, sol(a));
        }
        if (!ok) continue;
        theta /= theta.sum();
        best = std::min(best, q.evaluate(theta));
    }
    return best;
}

}  // namespace

TEST_CASE("project_simplex") {
    Vector in(3);
    in << 0.2, 0.3, 0.5;
    CHECK(project_simplex(in).weights().isApprox(in));
    Vector v(2);
    v << 2, 0;
    CHECK(project_simplex(v)[0] == doctest::Approx(1.0));
    CHECK(project_simplex(v)[1] == doctest::Approx(0.0));

    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const Vector x = rng.normal_vector(6);
        const double c = 10.0 * rng.normal();
        const Vector p1 = project_simplex(x).weights();
        const Vector p2 = project_simplex(x.array() + c).weights();
        CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-12);
        // Variational inequality of the projection: (x - p)^T (z - p) <= 0 for z in the simplex.
        for (int k = 0; k < 5; ++k) {
            const Vector z = random_simplex_point(rng, 6).weights();
            CHECK((x - p1).dot(z - p1) <= 1e-12);
        }
    }
}

TEST_CASE("solve_qp trivial cases") {
    const QPProblem sym{Matrix::Identity(4, 4), Vector::Zero(4), 0.0};
    const SolveResult r = solve_qp(sym);
    CHECK(r.converged);
    CHECK((r.theta.weights().array() - 0.25).abs().maxCoeff() < 1e-8);

    Vector c(3);
    c << 0.5, -1.0, 2.0;
    const SolveResult lp = solve_qp(QPProblem{Matrix::Zero(3, 3), c, 0.0});
    CHECK(lp.converged);
    CHECK(lp.theta[1] == doctest::Approx(1.0));

    const SolveResult one = solve_qp(QPProblem{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 3.0), 1.0});
    CHECK(one.theta[0] == 1.0);
    CHECK(one.objective == doctest::Approx(5.0));
}

TEST_CASE("solve_qp matches the exact support enumeration") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const std::size_t M = 2 + static_cast<std::size_t>(i % 5);
        const QPProblem q = random_problem(rng, M, 1 + static_cast<std::size_t>(i % 3));
        const SolveResult r = solve_qp(q);
        CHECK(r.converged);
        CHECK(r.kkt_residual <= default_tolerance(q));
        CHECK(r.objective <= exact_minimum(q) + 1e-8 * objective_scale(q));
        for (std::size_t j = 0; j < M; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            CHECK(r.objective <= 0.5 * q.gram(jj, jj) + q.lin(jj) + 1e-9 * objective_scale(q));
        }
    }
}

TEST_CASE("solve_qp against brute force, M = 3") {
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        const QPProblem q = random_problem(rng, 3, 3);
        const SolveResult r = solve_qp(q);
        const SolveResult g = brute_force_grid(q, 0.01);
        CHECK(r.objective <= g.objective + 1e-12);
        // Some lattice point d away from the minimiser has ||d||_1 <= 3h, ||d||^2 <= 3h^2, and the
        // gradient over the simplex is bounded by max|G| + max|c| in sup norm.
        const double h = 0.01;
        const double grad = q.gram.cwiseAbs().maxCoeff() + q.lin.cwiseAbs().maxCoeff();
        CHECK(g.objective - r.objective <= grad * 3 * h + 0.5 * largest_eigenvalue(q.gram) * 3 * h * h);
    }
}

TEST_CASE("strong convexity consequence at the minimiser") {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const QPProblem q = random_problem(rng, 5, 3);
        const SolveResult r = solve_qp(q);
        REQUIRE(r.converged);
        const double tol = default_tolerance(q);
        for (int k = 0; k < 1000; ++k) {
            const Vector t = random_simplex_point(rng, 5).weights();
            const Vector d = t - r.theta.weights();
            CHECK(q.evaluate(t) - r.objective >= 0.5 * d.dot(q.gram * d) - 10.0 * tol);
        }
    }
}

TEST_CASE("non-convergence is reported, not thrown") {
    Rng rng(5);
    const QPProblem q = random_problem(rng, 30, 30);
    SolveOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-300;
    CHECK_NOTHROW(solve_qp(q, opts));
    CHECK_FALSE(solve_qp(q, opts).converged);
}

TEST_CASE("kkt_residual") {
    Vector c(3);
    c << 0.0, 1.0, 2.0;
    const QPProblem lp{Matrix::Zero(3, 3), c, 0.0};
    CHECK(kkt_residual(lp, SimplexPoint::vertex(3, 0)) == 0.0);
    CHECK(kkt_residual(lp, SimplexPoint::vertex(3, 1)) > 0.0);

    const QPProblem sym{Matrix::Identity(3, 3), Vector::Zero(3), 0.0};
    CHECK(kkt_residual(sym, SimplexPoint::uniform(3)) < 1e-15);

    Rng rng(6);
    const QPProblem q = random_problem(rng, 3, 3);
    const SolveResult r = solve_qp(q);
    Vector d(3);
    d << 1.0, -0.5, -0.5;
    const Vector moved = project_simplex(r.theta.weights() + 0.01 * d).weights();
    CHECK(kkt_residual(q, moved) > 100.0 * r.kkt_residual);
}

TEST_CASE("brute_force_grid") {
    const QPProblem q{Matrix::Identity(2, 2), Vector::Zero(2), 0.0};
    const SolveResult g = brute_force_grid(q, 0.5);
    CHECK(g.iterations == 3);
    CHECK(g.theta[0] == doctest::Approx(0.5));
    const SolveResult fine = brute_force_grid(q, 0.01);
    CHECK(fine.theta[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(brute_force_grid(QPProblem{Matrix::Identity(6, 6), Vector::Zero(6), 0.0}, 0.5), CapacityError);
    CHECK_THROWS_AS(brute_force_grid(q, 0.3), DomainError);
}

TEST_CASE("largest eigenvalue") {
    Rng rng(7);
    const Matrix l = rng.normal_matrix(6, 6);
    const Matrix s = l * l.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    CHECK(largest_eigenvalue(s) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
}
