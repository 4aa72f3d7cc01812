#include "affagg/simplex_qp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace affagg {

namespace {

constexpr double kSupportTol = 1e-10;
constexpr std::size_t kCheckEvery = 20;
constexpr std::size_t kBruteForceMaxM = 5;

// Solve the equality-constrained problem restricted to `support`:
// G_SS x + c_S = lambda 1, 1^T x = 1. Returns nullopt when the solution
// leaves the simplex or the system is inconsistent.
std::optional<Vector> polish(const QPProblem& p, const std::vector<Eigen::Index>& support) {
    const auto s = static_cast<Eigen::Index>(support.size());
    if (s == 0) return std::nullopt;
    Matrix kkt = Matrix::Zero(s + 1, s + 1);
    Vector rhs(s + 1);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) kkt(a, b) = p.gram(support[a], support[b]);
        kkt(a, s) = -1.0;
        kkt(s, a) = 1.0;
        rhs(a) = -p.lin(support[a]);
    }
    rhs(s) = 1.0;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    Vector sol = cod.solve(rhs);
    if (!sol.allFinite()) return std::nullopt;
    const double resid = (kkt * sol - rhs).cwiseAbs().maxCoeff();
    const double scale = 1.0 + kkt.cwiseAbs().maxCoeff() * sol.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff();
    if (resid > 1e-10 * scale) return std::nullopt;
    Vector theta = Vector::Zero(p.lin.size());
    for (Eigen::Index a = 0; a < s; ++a) {
        if (sol(a) < -1e-12) return std::nullopt;
        theta(support[a]) = std::max(0.0, sol(a));
    }
    const double sum = theta.sum();
    if (!(sum > 0.0)) return std::nullopt;
    return Vector(theta / sum);
}

std::vector<Eigen::Index> support_of(const Vector& theta) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        if (theta(j) > kSupportTol) out.push_back(j);
    }
    return out;
}

}  // namespace

SimplexPoint project_simplex(const Vector& v) {
    if (v.size() == 0) throw DomainError("project_simplex: empty vector");
    if (!v.allFinite()) throw DomainError("project_simplex: non-finite input");
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cumsum += u[k];
        const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) tau = t;
    }
    Vector out = (v.array() - tau).cwiseMax(0.0).matrix();
    return SimplexPoint(std::move(out));
}

double objective_scale(const QPProblem& problem) {
    double s = 1.0;
    if (problem.gram.size()) s = std::max(s, problem.gram.diagonal().cwiseAbs().maxCoeff());
    if (problem.lin.size()) s = std::max(s, problem.lin.cwiseAbs().maxCoeff());
    return s;
}

double default_tolerance(const QPProblem& problem) { return 1e-9 * objective_scale(problem); }

double kkt_residual(const QPProblem& problem, const Vector& theta) {
    if (static_cast<std::size_t>(theta.size()) != problem.size()) {
        throw DimensionError("kkt_residual: theta", problem.size(), static_cast<std::size_t>(theta.size()));
    }
    const Vector g = problem.gradient(theta);
    double lambda = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        if (theta(j) > kSupportTol) lambda = std::min(lambda, g(j));
    }
    double r = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        r = std::max(r, theta(j) > kSupportTol ? std::abs(g(j) - lambda) : std::max(0.0, lambda - g(j)));
    }
    return r;
}

double largest_eigenvalue(const Matrix& sym, double tol, std::size_t max_iter) {
    const auto m = sym.rows();
    if (m == 0) return 0.0;
    // Deterministic start with no symmetry that could be orthogonal to the top eigenvector.
    Vector v(m);
    for (Eigen::Index i = 0; i < m; ++i) v(i) = 1.0 + 0.1 * std::sin(static_cast<double>(i + 1));
    v.normalize();
    double est = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Vector w = sym * v;
        const double next = v.dot(w);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        v = w / wn;
        if (std::abs(next - est) <= tol * std::abs(next)) return std::max(next, wn);
        est = next;
    }
    return est;
}

SolveResult solve_qp(const QPProblem& problem, const SolveOptions& options) {
    const std::size_t m = problem.size();
    if (m == 0) throw DomainError("solve_qp: empty problem");
    if (problem.gram.rows() != problem.lin.size() || problem.gram.cols() != problem.lin.size()) {
        throw DimensionError("solve_qp: gram vs lin", m, static_cast<std::size_t>(problem.gram.rows()));
    }
    const double tol = options.tol.value_or(default_tolerance(problem));
    if (!(tol > 0.0)) throw DomainError("solve_qp: tol must be positive");
    const std::size_t max_iter = options.max_iter.value_or(50 * m + 10000);

    auto finish = [&](Vector theta, std::size_t iters) {
        // Never return something worse than the best vertex.
        Eigen::Index best_vertex = 0;
        Vector vertex_obj = 0.5 * problem.gram.diagonal() + problem.lin;
        vertex_obj.minCoeff(&best_vertex);
        double obj = problem.evaluate(theta);
        if (vertex_obj(best_vertex) + problem.constant < obj - 1e-12 * objective_scale(problem)) {
            theta.setZero();
            theta(best_vertex) = 1.0;
            obj = problem.evaluate(theta);
        }
        SolveResult r{SimplexPoint(theta), obj, 0.0, iters, false};
        r.kkt_residual = kkt_residual(problem, r.theta);
        r.objective = problem.evaluate(r.theta.weights());
        r.converged = r.kkt_residual <= tol;
        return r;
    };

    if (m == 1) return finish(Vector::Ones(1), 0);

    double lipschitz = largest_eigenvalue(problem.gram) * 1.01;
    const double floor = 1e-3 * std::max(problem.lin.cwiseAbs().maxCoeff(), 1e-300);
    lipschitz = std::max(lipschitz, floor);
    const double step = 1.0 / lipschitz;

    // gx caches gram * x so each iteration costs one product with gram.
    Vector x = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    Vector gx = problem.gram * x;
    Vector y = x;
    Vector gy = gx;
    auto value = [&](const Vector& v, const Vector& gv) { return 0.5 * v.dot(gv) + problem.lin.dot(v) + problem.constant; };
    double fx = value(x, gx);
    double t = 1.0;
    double best_resid = kkt_residual(problem, x);
    std::vector<Eigen::Index> last_polished;

    for (std::size_t it = 1; it <= max_iter; ++it) {
        Vector x_new = project_simplex(y - step * (gy + problem.lin)).weights();
        Vector gx_new = problem.gram * x_new;
        double f_new = value(x_new, gx_new);
        if (f_new > fx) {
            // Monotone restart: drop momentum and take a plain projected step from x.
            t = 1.0;
            x_new = project_simplex(x - step * (gx + problem.lin)).weights();
            gx_new = problem.gram * x_new;
            f_new = value(x_new, gx_new);
            y = x_new;
            gy = gx_new;
        } else {
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const double c = (t - 1.0) / t_new;
            y = x_new + c * (x_new - x);
            gy = gx_new + c * (gx_new - gx);
            t = t_new;
        }
        x = std::move(x_new);
        gx = std::move(gx_new);
        fx = f_new;

        if (it % kCheckEvery != 0 && it != max_iter) continue;
        best_resid = kkt_residual(problem, x);
        if (best_resid <= tol) return finish(x, it);

        auto support = support_of(x);
        if (support != last_polished) {
            last_polished = support;
            if (auto cand = polish(problem, support)) {
                const double r = kkt_residual(problem, *cand);
                if (r < best_resid && problem.evaluate(*cand) <= fx + 1e-12 * objective_scale(problem)) {
                    x = *cand;
                    gx = problem.gram * x;
                    y = x;
                    gy = gx;
                    fx = value(x, gx);
                    t = 1.0;
                    best_resid = r;
                    if (r <= tol) return finish(x, it);
                }
            }
        }
    }
    return finish(x, max_iter);
}

SolveResult brute_force_grid(const QPProblem& problem, double resolution) {
    const std::size_t m = problem.size();
    if (m == 0) throw DomainError("brute_force_grid: empty problem");
    if (m > kBruteForceMaxM) throw CapacityError("brute_force_grid: dimension", m, kBruteForceMaxM);
    if (!(resolution > 0.0 && resolution <= 1.0)) throw DomainError("brute_force_grid: resolution must be in (0, 1]");
    const double steps_real = 1.0 / resolution;
    const auto steps = static_cast<long>(std::llround(steps_real));
    if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * steps_real) {
        throw DomainError("brute_force_grid: 1/resolution must be an integer");
    }

    std::vector<long> counts(m, 0);
    Vector theta(static_cast<Eigen::Index>(m));
    Vector best;
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t evaluated = 0;

    // Lexicographic enumeration of compositions of `steps` into m parts.
    std::function<void(std::size_t, long)> rec = [&](std::size_t pos, long remaining) {
        if (pos + 1 == m) {
            counts[pos] = remaining;
            for (std::size_t j = 0; j < m; ++j) {
                theta(static_cast<Eigen::Index>(j)) = static_cast<double>(counts[j]) / static_cast<double>(steps);
            }
            const double obj = problem.evaluate(theta);
            ++evaluated;
            if (obj < best_obj) {
                best_obj = obj;
                best = theta;
            }
            return;
        }
        for (long c = 0; c <= remaining; ++c) {
            counts[pos] = c;
            rec(pos + 1, remaining - c);
        }
    };
    rec(0, steps);

    SolveResult r{SimplexPoint(best), best_obj, 0.0, evaluated, true};
    r.kkt_residual = kkt_residual(problem, r.theta);
    return r;
}

}  // namespace affagg
