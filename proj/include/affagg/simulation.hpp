#ifndef AFFAGG_SIMULATION_HPP
#define AFFAGG_SIMULATION_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "affagg/procedures.hpp"

namespace affagg {

/// Pinned random source: mt19937_64, uniforms from the top 53 bits,
/// Box-Muller normals (both outputs used).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1].
    double uniform_open_low() { return 1.0 - uniform(); }
    double normal();
    /// Uniform integer in [lo, hi].
    std::size_t index(std::size_t lo, std::size_t hi);

    Vector normal_vector(std::size_t n);
    Matrix normal_matrix(std::size_t rows, std::size_t cols);

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

enum class NoiseKind { gaussian, rademacher, uniform };

std::string_view to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view name);

struct NoiseModel {
    NoiseKind kind = NoiseKind::gaussian;
    /// Coordinate standard deviation.
    double sigma = 1.0;
    /// sigma_bar (or K) used in subgaussian bound formulas; defaults to sigma.
    std::optional<double> subgaussian_bound;

    double bar() const { return subgaussian_bound.value_or(sigma); }
};

/// Deterministic given (model, n, seed). Uniform noise is U(-sigma sqrt 3, sigma sqrt 3);
/// Rademacher noise takes the values +-sigma.
Vector gen_noise(const NoiseModel& model, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Trials

enum class VariancePolicy { known, plugin, difference };

std::string_view to_string(VariancePolicy policy);
VariancePolicy variance_policy_from_string(std::string_view name);

/**
 * One Monte Carlo experiment: a family of estimators, a truth f, a noise
 * model and the procedure applied to y = f + xi on each trial.
 *
 * `objective` selects the aggregation criterion. With `select_vertex` the
 * procedure is Cp selection of a single estimator instead. When `mixing` is
 * set the criterion is minimised over the mixture bank (convex aggregation
 * over a Maurey grid).
 */
struct TrialSetup {
    std::shared_ptr<const std::vector<AffineEstimator>> family;
    std::optional<Matrix> mixing;
    ObjectiveKind objective = ObjectiveKind::h_pen;
    bool select_vertex = false;
    /// Variance handed to the criterion (the plug-in value under `plugin`).
    double sigma2 = 1.0;
    VariancePolicy variance_policy = VariancePolicy::known;
    double khat2 = 0.0;
    std::optional<Prior> prior;
    Vector f;
    NoiseModel noise;
    std::size_t trials = 0;
    std::uint64_t base_seed = 0;
    /// 0 means hardware concurrency.
    std::size_t threads = 0;
    SolveOptions solve;
};

struct TrialRecord {
    std::uint64_t seed = 0;
    /// ||mu_hat - f||^2.
    double risk = 0.0;
    /// min_j ||mu_j - f||^2 over the family.
    double oracle_risk = 0.0;
    /// risk - oracle_risk.
    double excess_risk = 0.0;
    std::size_t oracle_index = 0;
    /// min_j (||mu_j - f||^2 + 2 beta log(1/pi_j)), beta the criterion's entropy coefficient.
    double prior_oracle = std::numeric_limits<double>::quiet_NaN();
    /// Deterministic oracle inequality: both sides and rhs - lhs (NaN when not applicable).
    double role_lhs = std::numeric_limits<double>::quiet_NaN();
    double role_rhs = std::numeric_limits<double>::quiet_NaN();
    double role_slack = std::numeric_limits<double>::quiet_NaN();
    /// Solver tolerance used (KKT units).
    double tol = 0.0;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
    /// Variance actually used by the criterion.
    double sigma2_used = 0.0;
    std::string error;

    bool ok() const { return error.empty(); }
    /// role_slack >= -10 tol (vacuously true when not applicable).
    bool role_holds() const;
};

/// Runs `setup.trials` independent trials with seeds base_seed + t.
/// Output order and content do not depend on the thread count.
std::vector<TrialRecord> run_trials(const TrialSetup& setup);

/// Runs body(t) for t in [0, count) on `threads` workers (0 = hardware concurrency).
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Tail checks

inline constexpr double kWilsonZ = 1.959964;

/// Upper end of the Wilson score interval for k successes out of n.
double wilson_upper(std::size_t k, std::size_t n, double z = kWilsonZ);

struct TailCheckReport {
    std::size_t trials = 0;
    std::vector<double> x_levels;
    std::vector<double> bounds;
    std::vector<std::size_t> exceed_count;
    std::vector<double> empirical_exceed;
    std::vector<double> theoretical;
    std::vector<double> wilson_upper;
    std::vector<bool> pass;

    bool all_pass() const;
};

inline constexpr std::size_t kMinTailRecords = 100;

/// Fraction of `values` strictly above bound(x), compared with tail_prob(x).
/// NaN values count as exceedances. Requires at least 100 values.
TailCheckReport tail_check(const std::vector<double>& values, const std::function<double(double)>& bound,
                           const std::vector<double>& x_levels, const std::function<double(double)>& tail_prob,
                           double slack = 0.0);

/// Same, on the excess risks of trial records (failed trials count as exceedances).
TailCheckReport tail_check(const std::vector<TrialRecord>& records, const std::function<double(double)>& bound,
                           const std::vector<double>& x_levels, const std::function<double(double)>& tail_prob,
                           double slack = 0.0);

struct MeanSummary {
    double mean = 0.0;
    double std_error = 0.0;
    /// mean + z * std_error.
    double upper = 0.0;
};

MeanSummary mean_summary(const std::vector<double>& values, double z = kWilsonZ);
double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Expectation identity and concentration inequalities

struct IdentityCheckReport {
    std::size_t trials = 0;
    double mc_mean = 0.0;
    double closed_form = 0.0;
    double std_error = 0.0;
    double z_score = 0.0;
};

/// Monte Carlo mean of ||mu_j - mu_k||^2 / 2 against
/// ||(A_j - A_k) f + b_j - b_k||^2 / 2 + (sigma^2 / 2) ||A_j - A_k||_F^2.
IdentityCheckReport expectation_identity_check(const AffineEstimator& a_j, const AffineEstimator& a_k, const Vector& f,
                                               const NoiseModel& model, std::size_t trials, std::uint64_t seed,
                                               std::size_t threads = 0);

enum class ChaosForm {
    /// xi^T B xi - sigma^2 Tr B > 2 sigma^2 ||B||_F sqrt(x) + 2 sigma^2 ||B||_op x.
    gaussian,
    /// xi^T B xi - sigma^2 Tr B > 2 sigma sigma_bar ||B||_F sqrt(x) + 2 sigma_bar^2 ||B||_op x.
    hanson,
    /// xi^T B xi > K^2 (||B||_* + 2 ||B||_F sqrt(x) + 2 ||B||_op x), K = sigma_bar.
    hsu,
};

std::string_view to_string(ChaosForm form);
ChaosForm chaos_form_from_string(std::string_view name);

/// Norms are those of the symmetric part of B (xi^T B xi only sees it).
TailCheckReport chaos_tail_check(const Matrix& b, const NoiseModel& model, std::size_t trials,
                                 const std::vector<double>& x_levels, std::uint64_t seed,
                                 ChaosForm form = ChaosForm::gaussian, std::size_t threads = 0);

/// v^T xi > sigma_bar ||v|| sqrt(2x) against e^{-x}.
TailCheckReport linear_tail_check(const Vector& v, const NoiseModel& model, std::size_t trials,
                                  const std::vector<double>& x_levels, std::uint64_t seed, std::size_t threads = 0);

/// Max over random pairs (theta, theta0) of
/// |F(theta) - F(theta0) - grad F(theta0)^T (theta - theta0) - w ||mu_theta - mu_theta0||^2| / scale,
/// with w the objective's quadratic weight and scale = max(1, |F(theta)|, |F(theta0)|).
double strong_convexity_probe(const ObjectiveSpec& spec, const EstimatorBank& bank, std::size_t trials,
                              std::uint64_t seed);

/// Random point of the simplex (normalised exponentials).
SimplexPoint random_simplex_point(Rng& rng, std::size_t m);

// ---------------------------------------------------------------------------
// Algebraic identity suite on random instances

struct IdentitySuiteReport {
    std::size_t instances = 0;
    /// Max relative residuals.
    double bv_decomposition = 0.0;
    double taylor = 0.0;
    double quadratic_linear = 0.0;
    double decomposition_qv = 0.0;

    double max() const;
};

/// Random dense affine banks with n <= n_max, M <= m_max.
IdentitySuiteReport identity_suite(std::size_t instances, std::uint64_t seed, std::size_t n_max = 50,
                                   std::size_t m_max = 10);

}  // namespace affagg

#endif
