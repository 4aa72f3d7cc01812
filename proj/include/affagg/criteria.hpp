#ifndef AFFAGG_CRITERIA_HPP
#define AFFAGG_CRITERIA_HPP

#include <json.hpp>

#include <optional>
#include <string_view>
#include <utility>

#include "affagg/estimators.hpp"

namespace affagg {

/// A point of the simplex. Construction clips entries in [-1e-12, 0) to zero
/// and renormalises; anything further outside the simplex is rejected.
class SimplexPoint {
public:
    explicit SimplexPoint(Vector weights);

    static SimplexPoint vertex(std::size_t m, std::size_t j);
    static SimplexPoint uniform(std::size_t m);

    const Vector& weights() const noexcept { return w_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }
    double operator[](std::size_t j) const { return w_(static_cast<Eigen::Index>(j)); }

private:
    Vector w_;
};

/// Strictly positive probability vector over estimator indices.
class Prior {
public:
    explicit Prior(Vector pi);
    static Prior uniform(std::size_t m);

    const Vector& pi() const noexcept { return pi_; }
    /// log(1 / pi_j).
    const Vector& neg_log() const noexcept { return neg_log_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(pi_.size()); }

private:
    Vector pi_;
    Vector neg_log_;
};

/// 0.5 theta^T gram theta + lin^T theta + constant.
struct QPProblem {
    Matrix gram;
    Vector lin;
    double constant = 0.0;

    double evaluate(const Vector& theta) const;
    Vector gradient(const Vector& theta) const;
    std::size_t size() const noexcept { return static_cast<std::size_t>(lin.size()); }
};

void to_json(nlohmann::json& j, const QPProblem& p);
void from_json(const nlohmann::json& j, QPProblem& p);

enum class ObjectiveKind { cp, h_pen, v_pen, w_pen, u };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(std::string_view name);

/**
 * Names one of the scalar objectives together with its parameters.
 * `variance` is sigma^2 for cp / h_pen / v_pen and the plug-in sigma_hat^2
 * for w_pen; `khat2` is only used by u. `prior` is required by v_pen and u.
 */
struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::h_pen;
    double variance = 0.0;
    double khat2 = 0.0;
    std::optional<Prior> prior;

    static ObjectiveSpec cp(double sigma2) { return {ObjectiveKind::cp, sigma2, 0.0, std::nullopt}; }
    static ObjectiveSpec h_pen(double sigma2) { return {ObjectiveKind::h_pen, sigma2, 0.0, std::nullopt}; }
    static ObjectiveSpec v_pen(double sigma2, Prior p) { return {ObjectiveKind::v_pen, sigma2, 0.0, std::move(p)}; }
    static ObjectiveSpec w_pen(double sigma2_hat) { return {ObjectiveKind::w_pen, sigma2_hat, 0.0, std::nullopt}; }
    static ObjectiveSpec u(double khat2, Prior p) { return {ObjectiveKind::u, 0.0, khat2, std::move(p)}; }

    /// Variance multiplying 2 Tr(A_theta) in the objective (0 for u).
    double trace_variance() const;
    /// Coefficient multiplying sum_j theta_j log(1/pi_j) (0 when no prior term).
    double entropy_coefficient() const;
    /// Quadratic coefficient of ||mu_theta||^2 (1 for cp, 1/2 otherwise).
    double quadratic_weight() const;
};

// Gram-reduced evaluators (hot path).

/// sum_j theta_j ||mu_theta - mu_j||^2 = sum_j theta_j G_jj - theta^T G theta.
double penalty(const EstimatorBank& bank, const SimplexPoint& theta);
/// ||mu_theta||^2 - 2 y^T mu_theta + 2 sigma^2 Tr(A_theta).
double cp_criterion(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta);
double h_pen(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta);
/// H_pen + 46 sigma^2 sum_j theta_j log(1/pi_j).
double v_pen(const EstimatorBank& bank, double sigma2, const Prior& prior, const SimplexPoint& theta);
double w_pen(const EstimatorBank& bank, double sigma2_hat, const SimplexPoint& theta);
/// ||mu_theta||^2 - 2 y^T mu_theta + pen/2 + 32 khat^2 sum_j theta_j log(1/pi_j).
double u_objective(const EstimatorBank& bank, double khat2, const Prior& prior, const SimplexPoint& theta);

double evaluate(const EstimatorBank& bank, const ObjectiveSpec& spec, const SimplexPoint& theta);

/// Exact quadratic form of the named objective over R^M.
QPProblem qp_reduce(const EstimatorBank& bank, const ObjectiveSpec& spec);

/// 2 xi^T((A_j - A_k) f + b_j - b_k) + 2 (xi^T (A_j - A_k) xi - sigma^2 Tr(A_j - A_k)).
double delta_jk(const EstimatorBank& bank, const Vector& f, const Vector& xi, double sigma2, std::size_t j,
                std::size_t k);

struct DecompositionQV {
    Matrix q;
    Vector v;
};

/// Q = (2I - (A_k - A_j)^T / 2)(A_k - A_j),
/// v = (2I - (A_k - A_j)^T)((A_k - A_j) f + b_k - b_j). Dense; meant for moderate n.
DecompositionQV decomposition_qv(const EstimatorBank& bank, const Vector& f, std::size_t j, std::size_t k);

/// Direct (non-Gram) evaluators, kept as an independent slow path.
namespace direct {
Vector mixture_fit(const EstimatorBank& bank, const SimplexPoint& theta);
double penalty(const EstimatorBank& bank, const SimplexPoint& theta);
double cp_criterion(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta);
double evaluate(const EstimatorBank& bank, const ObjectiveSpec& spec, const SimplexPoint& theta);
}  // namespace direct

}  // namespace affagg

#endif
