#ifndef AFFAGG_ESTIMATORS_HPP
#define AFFAGG_ESTIMATORS_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "affagg/errors.hpp"

namespace affagg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * An affine estimator y -> A y + b.
 *
 * The linear part is kept in one of several structured forms so that
 * applying, tracing and bounding it never needs an n x n dense matrix
 * unless the estimator really is dense.
 */
class AffineEstimator {
public:
    enum class Kind { dense, diagonal, projector, scaled_identity, zero };

    struct Dense { Matrix a; };
    struct Diagonal { Vector weights; };
    /// Orthoprojector Q Q^T with Q column-orthonormal (n x d).
    struct Projector { Matrix basis; };
    struct ScaledIdentity { double lambda; };
    struct Zero {};

    static AffineEstimator dense(Matrix a, Vector offset = {});
    static AffineEstimator diagonal(Vector weights, Vector offset = {});
    static AffineEstimator projector(Matrix basis, Vector offset = {});
    static AffineEstimator scaled_identity(std::size_t n, double lambda, Vector offset = {});
    static AffineEstimator zero(std::size_t n, Vector offset = {});

    Kind kind() const noexcept;
    std::size_t dim() const noexcept { return n_; }
    const Vector& offset() const noexcept { return offset_; }
    bool has_offset() const noexcept;

    /// A y + b.
    Vector apply(const Vector& y) const;
    /// A x (no offset).
    Vector apply_linear(const Vector& x) const;
    /// A^T x.
    Vector apply_linear_transpose(const Vector& x) const;

    double trace() const;
    /// Largest singular value of the linear part. Closed form for structured
    /// kinds; power iteration on A^T A for dense maps.
    double operator_norm(double tol = 1e-10) const;
    /// ||A||_op <= 1 + 1e-8.
    bool admissible() const;

    Matrix to_dense() const;

    template <typename Visitor>
    decltype(auto) visit(Visitor&& v) const { return std::visit(std::forward<Visitor>(v), rep_); }

private:
    using Rep = std::variant<Dense, Diagonal, Projector, ScaledIdentity, Zero>;
    AffineEstimator(std::size_t n, Rep rep, Vector offset);

    std::size_t n_;
    Rep rep_;
    Vector offset_;
};

/// Largest singular value of a dense matrix by power iteration on A^T A.
/// At most 10 000 iterations per start, two deterministic random restarts.
/// Throws ConvergenceError carrying the best estimate on failure.
double dense_operator_norm(const Matrix& a, double tol = 1e-10);

/// Convex (or arbitrary linear) combination sum_j w_j (A_j, b_j). Stays
/// diagonal when every component is diagonal-like, otherwise dense.
AffineEstimator mix(std::span<const AffineEstimator> components, std::span<const double> weights);

struct ProjectionResult {
    AffineEstimator estimator;
    std::size_t rank;
    bool rank_deficient;
};

/// Least-squares projector onto span of the selected columns of `design`.
/// Rank is decided by singular values > 1e-10 * largest.
ProjectionResult make_projection(const Matrix& design, std::span<const std::size_t> cols);

struct SmoothnessGrid {
    std::size_t n;
    std::size_t size;
    std::vector<double> betas;
};

/// M = ceil(120 log n (log log n)^2), beta_j = (1 + 1/(log n log log n))^(j-1).
SmoothnessGrid smoothness_grid(std::size_t n);

/// Ordered diagonal filter: weight for coordinate j (1-based) given smoothness beta.
using FilterFamily = std::function<double(std::size_t j, std::size_t n, double beta)>;

/// max(0, 1 - (j / n^(1/(2 beta + 1)))^beta).
double default_filter(std::size_t j, std::size_t n, double beta);

std::vector<AffineEstimator> filter_bank(const SmoothnessGrid& grid, const FilterFamily& family = default_filter);

/// (1 / (2n - 2)) sum_i (y_{i+1} - y_i)^2.
double difference_variance(const Vector& y);

/**
 * M estimators evaluated at one observation vector: fits, their Gram
 * matrix and the traces of the linear parts.
 *
 * A bank can also be a mixture bank whose estimators are convex
 * combinations of a base family; fits and traces are then computed
 * linearly and individual estimators are only materialised on request.
 */
class EstimatorBank {
public:
    EstimatorBank(std::vector<AffineEstimator> estimators, Vector y);
    EstimatorBank(std::shared_ptr<const std::vector<AffineEstimator>> estimators, Vector y);

    /// Rows of `mixing` are weight vectors over the base family.
    static EstimatorBank mixture(const EstimatorBank& base, Matrix mixing);

    std::size_t size() const noexcept { return static_cast<std::size_t>(fits_.cols()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(fits_.rows()); }

    const Vector& observation() const noexcept { return y_; }
    /// n x M, column j is A_j y + b_j.
    const Matrix& fits() const noexcept { return fits_; }
    Eigen::Ref<const Vector> fit(std::size_t j) const { return fits_.col(static_cast<Eigen::Index>(j)); }
    const Matrix& gram() const noexcept { return gram_; }
    const Vector& traces() const noexcept { return traces_; }
    /// y^T fit_j.
    const Vector& y_dot_fits() const noexcept { return y_dot_fits_; }

    bool is_mixture() const noexcept { return mixing_.size() != 0; }
    const Matrix& mixing() const noexcept { return mixing_; }
    const std::vector<AffineEstimator>& base_estimators() const noexcept { return *base_; }

    /// Estimator j; materialised for mixture banks.
    AffineEstimator estimator(std::size_t j) const;

    /// Same family, new observation vector.
    EstimatorBank refit(Vector y) const;

    /// Indices of estimators with ||A_j||_op > 1 + 1e-8.
    std::vector<std::size_t> inadmissible() const;
    bool all_projectors() const;

private:
    EstimatorBank() = default;
    void finish();

    std::shared_ptr<const std::vector<AffineEstimator>> base_;
    Matrix mixing_;
    Vector y_;
    Matrix fits_;
    Matrix gram_;
    Vector traces_;
    Vector y_dot_fits_;
};

}  // namespace affagg

#endif
