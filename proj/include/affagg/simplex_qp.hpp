#ifndef AFFAGG_SIMPLEX_QP_HPP
#define AFFAGG_SIMPLEX_QP_HPP

#include <cstddef>
#include <optional>

#include "affagg/criteria.hpp"

namespace affagg {

struct SolveResult {
    SimplexPoint theta;
    double objective = 0.0;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

struct SolveOptions {
    /// Defaults to 1e-9 * objective_scale(problem).
    std::optional<double> tol;
    /// Defaults to 50 M + 10 000.
    std::optional<std::size_t> max_iter;
};

/// Euclidean projection onto the simplex (sort-based, exact).
SimplexPoint project_simplex(const Vector& v);

/// max(1, max_j |G_jj|, max_j |c_j|): the unit in which KKT residuals are measured.
double objective_scale(const QPProblem& problem);

double default_tolerance(const QPProblem& problem);

/// With g = G theta + c and lambda = min of g over the support
/// (theta_j > 1e-10): max over j of |g_j - lambda| on the support and
/// max(0, lambda - g_j) off it. Zero exactly at minimisers.
double kkt_residual(const QPProblem& problem, const Vector& theta);
inline double kkt_residual(const QPProblem& problem, const SimplexPoint& theta) {
    return kkt_residual(problem, theta.weights());
}

/// Accelerated projected gradient with monotone restart and an active-set
/// polish. Never throws on non-convergence; check `converged`.
SolveResult solve_qp(const QPProblem& problem, const SolveOptions& options = {});

/// Exhaustive search over simplex points whose coordinates are multiples of
/// `resolution` (1/resolution must be an integer). Requires M <= 5. Ties go
/// to the lexicographically first lattice point.
SolveResult brute_force_grid(const QPProblem& problem, double resolution);

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double largest_eigenvalue(const Matrix& sym, double tol = 1e-8, std::size_t max_iter = 5000);

}  // namespace affagg

#endif
