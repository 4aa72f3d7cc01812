#ifndef AFFAGG_PROCEDURES_HPP
#define AFFAGG_PROCEDURES_HPP

#include <memory>
#include <string>
#include <vector>

#include "affagg/criteria.hpp"
#include "affagg/simplex_qp.hpp"

namespace affagg {

struct AggregateOutput {
    SimplexPoint theta;
    /// sum_j theta_j mu_j.
    Vector fitted;
    SolveResult solve;
    ObjectiveKind objective_kind;
    std::vector<std::string> warnings;
};

struct AggregateOptions {
    SolveOptions solve;
    /// Check admissibility / projector assumptions and attach warnings.
    /// Simulation loops check once up front and turn this off.
    bool check_assumptions = true;
};

/// argmin over the simplex of the given objective.
AggregateOutput aggregate(const EstimatorBank& bank, const ObjectiveSpec& spec, const AggregateOptions& options = {});

/// argmin H_pen.
AggregateOutput q_aggregate(const EstimatorBank& bank, double sigma2, const AggregateOptions& options = {});
/// argmin V_pen.
AggregateOutput q_aggregate_prior(const EstimatorBank& bank, double sigma2, const Prior& prior,
                                  const AggregateOptions& options = {});
/// argmin W_pen, sigma^2 replaced by an estimate in the trace term.
AggregateOutput q_aggregate_plugin_variance(const EstimatorBank& bank, double sigma2_hat,
                                            const AggregateOptions& options = {});
/// Same estimator as q_aggregate; named separately so experiments can say
/// they exercise the subgaussian-noise guarantee.
AggregateOutput q_aggregate_subgaussian(const EstimatorBank& bank, double sigma2, const AggregateOptions& options = {});
/// argmin of unpenalised Cp over the simplex.
AggregateOutput cp_minimize(const EstimatorBank& bank, double sigma2, const AggregateOptions& options = {});

/// Smallest (0-based) index minimising Cp(e_j).
std::size_t erm_cp_select(const EstimatorBank& bank, double sigma2);

// ---------------------------------------------------------------------------
// Maurey grid / convex aggregation

struct MaureyGrid {
    std::size_t M = 0;
    std::size_t m = 0;
    /// count x M, each row a grid point with coordinates in {0, 1/m, ..., 1}.
    Matrix points;

    std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
    SimplexPoint point(std::size_t i) const;
};

inline constexpr std::size_t kDefaultGridCap = 200000;
inline constexpr std::size_t kDefaultGridBankCap = 4000;

/// floor(sqrt(n / log(1 + M / sqrt(n)))).
std::size_t maurey_m(std::size_t M, std::size_t n);
/// C(M + m - 1, m), saturating at SIZE_MAX.
std::size_t maurey_grid_count(std::size_t M, std::size_t m);
/// Averages of m vertices, deduplicated. Throws DomainError for m = 0 and
/// CapacityError when the count exceeds `cap`.
MaureyGrid maurey_grid(std::size_t M, std::size_t m, std::size_t cap = kDefaultGridCap);
/// Grid with m = maurey_m(M, n).
MaureyGrid maurey_grid_for(std::size_t M, std::size_t n, std::size_t cap = kDefaultGridCap);

struct ConvexOptions {
    AggregateOptions aggregate;
    /// Overrides maurey_m(M, n) when set.
    std::optional<std::size_t> m;
    std::size_t grid_cap = kDefaultGridCap;
    std::size_t bank_cap = kDefaultGridBankCap;
};

struct ConvexAggregateOutput {
    /// q-aggregation over the grid bank.
    AggregateOutput grid_output;
    /// The same aggregate expressed as weights over the original estimators.
    SimplexPoint theta;
    MaureyGrid grid;
};

ConvexAggregateOutput convex_aggregate(const EstimatorBank& bank, double sigma2, const ConvexOptions& options = {});

/// Sigma of the lemma's theta^T Sigma theta form: half the QP Hessian.
double maurey_bound(const QPProblem& q, std::size_t m);
/// min over grid of q minus min over the simplex. Requires M <= 5.
double maurey_gap(const QPProblem& q, const MaureyGrid& grid);

// ---------------------------------------------------------------------------
// Sparsity pattern aggregation and k-regressors

struct SparsitySpec {
    Matrix design;
    std::size_t k_max = 0;
    double khat2 = 0.0;
    /// Enumerated supports, by size then lexicographically; supports[0] is empty.
    std::vector<std::vector<std::size_t>> supports;
    /// pi_J proportional to e^{-|J|} / C(p, |J|), renormalised over `supports`.
    Prior prior;
    /// Least-squares projector for each support.
    std::shared_ptr<const std::vector<AffineEstimator>> projectors;
    /// Supports violating Tr(A_J) <= log(1 / pi_J).
    std::vector<std::size_t> trace_violations;
};

inline constexpr std::size_t kDefaultSupportCap = 100000;

/// k_max = 0 means min(p, 8).
SparsitySpec make_sparsity_spec(Matrix design, std::size_t k_max, double khat2,
                                std::size_t max_supports = kDefaultSupportCap);

/// argmin of the U objective over the bank of least-squares projectors.
AggregateOutput sparsity_pattern_aggregate(const SparsitySpec& spec, const Vector& y,
                                           const AggregateOptions& options = {});

struct KRegressorFamily {
    std::vector<std::vector<std::size_t>> supports;
    std::shared_ptr<const std::vector<AffineEstimator>> projectors;
};

/// Projectors onto spans of k linearly independent columns; rank-deficient
/// subsets are skipped.
KRegressorFamily make_kregressor_family(const Matrix& design, std::size_t k, std::size_t max_subsets = kDefaultSupportCap);

AggregateOutput kregressor_aggregate(const Matrix& design, std::size_t k, const Vector& y, double sigma2,
                                     const AggregateOptions& options = {});

/// C(n, k) as a double (exact for the sizes used here).
double binomial(std::size_t n, std::size_t k);

// ---------------------------------------------------------------------------
// Deterministic oracle inequality

/**
 * Both sides of the almost-sure inequality satisfied by a minimiser theta_hat
 * of the penalised objectives (H_pen, V_pen, W_pen, U) and, without the
 * quadratic compensation, of Cp:
 *
 *   ||mu_hat - f||^2 <= min_q (||mu_q - f||^2 + 2 beta log(1/pi_q)) + max_{j,k} Z_jk
 *
 * with Z_jk = 2 xi^T (mu_j - mu_k) - 2 s^2 (T_j - T_k) - beta (log(1/pi_j) + log(1/pi_k))
 *            - kappa ||mu_j - mu_k||^2,
 * s^2 the objective's trace variance, beta its entropy coefficient and
 * kappa = 1/2 (0 for Cp). For H_pen, Z_jk = Delta_jk - ||mu_j - mu_k||^2 / 2.
 */
struct OracleBound {
    double lhs = 0.0;
    double oracle_term = 0.0;
    double max_pair_term = 0.0;
    double rhs() const { return oracle_term + max_pair_term; }
};

OracleBound oracle_bound(const EstimatorBank& bank, const ObjectiveSpec& spec, const Vector& fitted, const Vector& f,
                         const Vector& xi);

}  // namespace affagg

#endif
