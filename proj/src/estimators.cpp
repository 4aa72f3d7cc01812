#include "affagg/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace affagg {

namespace {

constexpr double kAdmissibleSlack = 1e-8;
constexpr double kOrthonormalTol = 1e-10;
constexpr double kRankTol = 1e-10;
constexpr int kPowerIterationCap = 10000;

Vector checked_offset(std::size_t n, Vector offset) {
    if (offset.size() == 0) return Vector::Zero(static_cast<Eigen::Index>(n));
    if (static_cast<std::size_t>(offset.size()) != n) {
        throw DimensionError("affine estimator offset", n, static_cast<std::size_t>(offset.size()));
    }
    if (!offset.allFinite()) throw DomainError("affine estimator offset has non-finite entries");
    return offset;
}

bool is_zero_one(double w) { return w == 0.0 || w == 1.0; }

template <class... Ts>
struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// One power-iteration run on A^T A from `start`. Returns (estimate, converged).
std::pair<double, bool> power_run(const Matrix& a, Vector v, double tol) {
    double prev = -1.0;
    double norm = v.norm();
    if (norm == 0.0) return {0.0, true};
    v /= norm;
    for (int it = 0; it < kPowerIterationCap; ++it) {
        Vector w = a * v;
        double s = w.norm();
        if (s == 0.0) return {0.0, true};
        if (prev >= 0.0 && std::abs(s - prev) <= tol * s) return {s, true};
        prev = s;
        v = a.transpose() * w;
        double vn = v.norm();
        if (vn == 0.0) return {s, true};
        v /= vn;
    }
    return {prev, false};
}

}  // namespace

AffineEstimator::AffineEstimator(std::size_t n, Rep rep, Vector offset)
    : n_(n), rep_(std::move(rep)), offset_(checked_offset(n, std::move(offset))) {}

AffineEstimator AffineEstimator::dense(Matrix a, Vector offset) {
    if (a.rows() != a.cols()) {
        throw DimensionError("dense linear part must be square (columns)", static_cast<std::size_t>(a.rows()),
                             static_cast<std::size_t>(a.cols()));
    }
    if (!a.allFinite()) throw DomainError("dense linear part has non-finite entries");
    auto n = static_cast<std::size_t>(a.rows());
    return AffineEstimator(n, Dense{std::move(a)}, std::move(offset));
}

AffineEstimator AffineEstimator::diagonal(Vector weights, Vector offset) {
    if (!weights.allFinite()) throw DomainError("diagonal weights have non-finite entries");
    auto n = static_cast<std::size_t>(weights.size());
    return AffineEstimator(n, Diagonal{std::move(weights)}, std::move(offset));
}

AffineEstimator AffineEstimator::projector(Matrix basis, Vector offset) {
    if (!basis.allFinite()) throw DomainError("projector basis has non-finite entries");
    const auto d = basis.cols();
    if (d > basis.rows()) {
        throw DimensionError("projector basis has more columns than rows", static_cast<std::size_t>(basis.rows()),
                             static_cast<std::size_t>(d));
    }
    if (d > 0) {
        Matrix gram = basis.transpose() * basis;
        double dev = (gram - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
        if (dev > kOrthonormalTol) {
            throw DomainError("projector basis is not orthonormal (max |Q^T Q - I| = " + std::to_string(dev) + ")");
        }
    }
    auto n = static_cast<std::size_t>(basis.rows());
    return AffineEstimator(n, Projector{std::move(basis)}, std::move(offset));
}

AffineEstimator AffineEstimator::scaled_identity(std::size_t n, double lambda, Vector offset) {
    if (!std::isfinite(lambda)) throw DomainError("scaled identity factor is not finite");
    return AffineEstimator(n, ScaledIdentity{lambda}, std::move(offset));
}

AffineEstimator AffineEstimator::zero(std::size_t n, Vector offset) {
    return AffineEstimator(n, Zero{}, std::move(offset));
}

AffineEstimator::Kind AffineEstimator::kind() const noexcept {
    switch (rep_.index()) {
        case 0: return Kind::dense;
        case 1: return Kind::diagonal;
        case 2: return Kind::projector;
        case 3: return Kind::scaled_identity;
        default: return Kind::zero;
    }
}

bool AffineEstimator::has_offset() const noexcept { return !offset_.isZero(0.0); }

Vector AffineEstimator::apply_linear(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != n_) {
        throw DimensionError("apply: observation vector", n_, static_cast<std::size_t>(x.size()));
    }
    return std::visit(overloaded{
                          [&](const Dense& d) -> Vector { return d.a * x; },
                          [&](const Diagonal& d) -> Vector { return d.weights.cwiseProduct(x); },
                          [&](const Projector& p) -> Vector {
                              if (p.basis.cols() == 0) return Vector::Zero(x.size());
                              return p.basis * (p.basis.transpose() * x);
                          },
                          [&](const ScaledIdentity& s) -> Vector { return s.lambda * x; },
                          [&](const Zero&) -> Vector { return Vector::Zero(x.size()); },
                      },
                      rep_);
}

Vector AffineEstimator::apply_linear_transpose(const Vector& x) const {
    if (const auto* d = std::get_if<Dense>(&rep_)) {
        if (static_cast<std::size_t>(x.size()) != n_) {
            throw DimensionError("apply_transpose: vector", n_, static_cast<std::size_t>(x.size()));
        }
        return d->a.transpose() * x;
    }
    return apply_linear(x);  // every structured kind is symmetric
}

Vector AffineEstimator::apply(const Vector& y) const { return apply_linear(y) + offset_; }

double AffineEstimator::trace() const {
    return std::visit(overloaded{
                          [](const Dense& d) { return d.a.trace(); },
                          [](const Diagonal& d) { return d.weights.sum(); },
                          [](const Projector& p) { return static_cast<double>(p.basis.cols()); },
                          [this](const ScaledIdentity& s) { return static_cast<double>(n_) * s.lambda; },
                          [](const Zero&) { return 0.0; },
                      },
                      rep_);
}

double AffineEstimator::operator_norm(double tol) const {
    if (!(tol > 0.0)) throw DomainError("operator_norm: tol must be positive");
    return std::visit(overloaded{
                          [tol](const Dense& d) { return dense_operator_norm(d.a, tol); },
                          [](const Diagonal& d) { return d.weights.size() ? d.weights.cwiseAbs().maxCoeff() : 0.0; },
                          [](const Projector& p) { return p.basis.cols() > 0 ? 1.0 : 0.0; },
                          [this](const ScaledIdentity& s) { return n_ > 0 ? std::abs(s.lambda) : 0.0; },
                          [](const Zero&) { return 0.0; },
                      },
                      rep_);
}

bool AffineEstimator::admissible() const { return operator_norm() <= 1.0 + kAdmissibleSlack; }

Matrix AffineEstimator::to_dense() const {
    const auto n = static_cast<Eigen::Index>(n_);
    return std::visit(overloaded{
                          [](const Dense& d) -> Matrix { return d.a; },
                          [](const Diagonal& d) -> Matrix { return d.weights.asDiagonal(); },
                          [n](const Projector& p) -> Matrix {
                              if (p.basis.cols() == 0) return Matrix::Zero(n, n);
                              return p.basis * p.basis.transpose();
                          },
                          [n](const ScaledIdentity& s) -> Matrix { return s.lambda * Matrix::Identity(n, n); },
                          [n](const Zero&) -> Matrix { return Matrix::Zero(n, n); },
                      },
                      rep_);
}

double dense_operator_norm(const Matrix& a, double tol) {
    if (a.size() == 0) return 0.0;
    std::mt19937_64 gen(0x5eed0001ULL);
    auto random_start = [&] {
        Vector v(a.cols());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v(i) = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
        }
        return v;
    };
    double best = 0.0;
    bool any_converged = false;
    // First run plus two restarts; the maximum is kept since every run
    // underestimates the top singular value.
    for (int run = 0; run < 3; ++run) {
        auto [estimate, converged] = power_run(a, random_start(), tol);
        best = std::max(best, estimate);
        any_converged = any_converged || converged;
    }
    if (!any_converged) {
        throw ConvergenceError("operator_norm: power iteration did not converge in " +
                                   std::to_string(kPowerIterationCap) + " iterations",
                               best);
    }
    return best;
}

AffineEstimator mix(std::span<const AffineEstimator> components, std::span<const double> weights) {
    if (components.empty()) throw DomainError("mix: no components");
    if (components.size() != weights.size()) {
        throw DimensionError("mix: weights", components.size(), weights.size());
    }
    const std::size_t n = components.front().dim();
    const auto ni = static_cast<Eigen::Index>(n);
    Vector offset = Vector::Zero(ni);
    bool diagonal_like = true;
    for (std::size_t j = 0; j < components.size(); ++j) {
        if (components[j].dim() != n) throw DimensionError("mix: component dimension", n, components[j].dim());
        offset += weights[j] * components[j].offset();
        auto k = components[j].kind();
        if (k == AffineEstimator::Kind::dense || k == AffineEstimator::Kind::projector) diagonal_like = false;
    }
    if (diagonal_like) {
        Vector diag = Vector::Zero(ni);
        for (std::size_t j = 0; j < components.size(); ++j) {
            if (weights[j] == 0.0) continue;
            diag += weights[j] * components[j].apply_linear(Vector::Ones(ni));
        }
        return AffineEstimator::diagonal(std::move(diag), std::move(offset));
    }
    Matrix a = Matrix::Zero(ni, ni);
    for (std::size_t j = 0; j < components.size(); ++j) {
        if (weights[j] == 0.0) continue;
        a += weights[j] * components[j].to_dense();
    }
    return AffineEstimator::dense(std::move(a), std::move(offset));
}

ProjectionResult make_projection(const Matrix& design, std::span<const std::size_t> cols) {
    const auto n = static_cast<std::size_t>(design.rows());
    if (cols.empty()) return {AffineEstimator::zero(n), 0, false};
    Matrix sub(design.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] >= static_cast<std::size_t>(design.cols())) {
            throw DimensionError("make_projection: column index out of range", static_cast<std::size_t>(design.cols()),
                                 cols[c]);
        }
        sub.col(static_cast<Eigen::Index>(c)) = design.col(static_cast<Eigen::Index>(cols[c]));
    }
    Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    std::size_t rank = 0;
    if (s.size() > 0 && s(0) > 0.0) {
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            if (s(i) > kRankTol * s(0)) ++rank;
        }
    }
    if (rank == 0) return {AffineEstimator::zero(n), 0, true};
    Matrix basis = svd.matrixU().leftCols(static_cast<Eigen::Index>(rank));
    return {AffineEstimator::projector(std::move(basis)), rank, rank < cols.size()};
}

SmoothnessGrid smoothness_grid(std::size_t n) {
    if (n < 3) throw DomainError("smoothness_grid requires n >= 3 so that log log n > 0");
    const double ln = std::log(static_cast<double>(n));
    const double lln = std::log(ln);
    const auto size = static_cast<std::size_t>(std::ceil(120.0 * ln * lln * lln));
    const double ratio = 1.0 + 1.0 / (ln * lln);
    SmoothnessGrid grid{n, size, {}};
    grid.betas.reserve(size);
    double beta = 1.0;
    for (std::size_t j = 0; j < size; ++j) {
        grid.betas.push_back(beta);
        beta *= ratio;
    }
    return grid;
}

double default_filter(std::size_t j, std::size_t n, double beta) {
    const double cutoff = std::pow(static_cast<double>(n), 1.0 / (2.0 * beta + 1.0));
    return std::max(0.0, 1.0 - std::pow(static_cast<double>(j) / cutoff, beta));
}

std::vector<AffineEstimator> filter_bank(const SmoothnessGrid& grid, const FilterFamily& family) {
    std::vector<AffineEstimator> out;
    out.reserve(grid.size);
    const auto n = static_cast<Eigen::Index>(grid.n);
    for (double beta : grid.betas) {
        Vector w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = family(static_cast<std::size_t>(i) + 1, grid.n, beta);
        out.push_back(AffineEstimator::diagonal(std::move(w)));
    }
    return out;
}

double difference_variance(const Vector& y) {
    const auto n = y.size();
    if (n < 2) throw DomainError("difference_variance requires n >= 2");
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double d = y(i + 1) - y(i);
        acc += d * d;
    }
    return acc / (2.0 * static_cast<double>(n) - 2.0);
}

// ---------------------------------------------------------------------------

EstimatorBank::EstimatorBank(std::vector<AffineEstimator> estimators, Vector y)
    : EstimatorBank(std::make_shared<const std::vector<AffineEstimator>>(std::move(estimators)), std::move(y)) {}

EstimatorBank::EstimatorBank(std::shared_ptr<const std::vector<AffineEstimator>> estimators, Vector y)
    : base_(std::move(estimators)), y_(std::move(y)) {
    if (!base_ || base_->empty()) throw DomainError("estimator bank needs at least one estimator");
    if (!y_.allFinite()) throw DomainError("observation has non-finite entries");
    const auto n = static_cast<std::size_t>(y_.size());
    fits_.resize(y_.size(), static_cast<Eigen::Index>(base_->size()));
    traces_.resize(static_cast<Eigen::Index>(base_->size()));
    for (std::size_t j = 0; j < base_->size(); ++j) {
        const auto& est = (*base_)[j];
        if (est.dim() != n) throw DimensionError("estimator bank: estimator dimension", n, est.dim());
        fits_.col(static_cast<Eigen::Index>(j)) = est.apply(y_);
        traces_(static_cast<Eigen::Index>(j)) = est.trace();
    }
    finish();
}

EstimatorBank EstimatorBank::mixture(const EstimatorBank& base, Matrix mixing) {
    if (static_cast<std::size_t>(mixing.cols()) != base.base_->size()) {
        throw DimensionError("mixture bank: weight vector length", base.base_->size(),
                             static_cast<std::size_t>(mixing.cols()));
    }
    if (mixing.rows() == 0) throw DomainError("mixture bank needs at least one row");
    if (base.is_mixture()) {
        mixing = mixing * base.mixing_;
    }
    EstimatorBank out;
    out.base_ = base.base_;
    out.y_ = base.y_;
    // Base fits are recovered from the unmixed family.
    Matrix base_fits(base.y_.size(), static_cast<Eigen::Index>(base.base_->size()));
    Vector base_traces(static_cast<Eigen::Index>(base.base_->size()));
    if (base.is_mixture()) {
        for (std::size_t j = 0; j < base.base_->size(); ++j) {
            base_fits.col(static_cast<Eigen::Index>(j)) = (*base.base_)[j].apply(base.y_);
            base_traces(static_cast<Eigen::Index>(j)) = (*base.base_)[j].trace();
        }
    } else {
        base_fits = base.fits_;
        base_traces = base.traces_;
    }
    out.fits_ = base_fits * mixing.transpose();
    out.traces_ = mixing * base_traces;
    out.mixing_ = std::move(mixing);
    out.finish();
    return out;
}

void EstimatorBank::finish() {
    gram_ = fits_.transpose() * fits_;
    gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
    y_dot_fits_ = fits_.transpose() * y_;
}

AffineEstimator EstimatorBank::estimator(std::size_t j) const {
    if (j >= size()) throw DimensionError("estimator index out of range", size(), j);
    if (!is_mixture()) return (*base_)[j];
    std::vector<double> w(static_cast<std::size_t>(mixing_.cols()));
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = mixing_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    return mix(*base_, w);
}

EstimatorBank EstimatorBank::refit(Vector y) const {
    EstimatorBank base(base_, std::move(y));
    if (!is_mixture()) return base;
    return mixture(base, mixing_);
}

std::vector<std::size_t> EstimatorBank::inadmissible() const {
    std::vector<double> base_norms(base_->size());
    for (std::size_t k = 0; k < base_->size(); ++k) base_norms[k] = (*base_)[k].operator_norm();
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j) {
        double bound;
        if (!is_mixture()) {
            bound = base_norms[j];
        } else {
            bound = 0.0;
            for (std::size_t k = 0; k < base_norms.size(); ++k) {
                bound += std::abs(mixing_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k))) * base_norms[k];
            }
            // The triangle bound is only an upper bound; confirm before flagging.
            if (bound > 1.0 + kAdmissibleSlack) bound = estimator(j).operator_norm();
        }
        if (bound > 1.0 + kAdmissibleSlack) out.push_back(j);
    }
    return out;
}

bool EstimatorBank::all_projectors() const {
    auto is_projector = [](const AffineEstimator& e) {
        return e.visit(overloaded{
            [](const AffineEstimator::Dense& d) {
                const Matrix& a = d.a;
                return (a - a.transpose()).norm() <= 1e-9 && (a * a - a).norm() <= 1e-9;
            },
            [](const AffineEstimator::Diagonal& d) {
                return std::all_of(d.weights.begin(), d.weights.end(), is_zero_one);
            },
            [](const AffineEstimator::Projector&) { return true; },
            [](const AffineEstimator::ScaledIdentity& s) { return is_zero_one(s.lambda); },
            [](const AffineEstimator::Zero&) { return true; },
        });
    };
    if (!is_mixture()) return std::all_of(base_->begin(), base_->end(), is_projector);
    for (std::size_t j = 0; j < size(); ++j) {
        if (!is_projector(estimator(j))) return false;
    }
    return true;
}

}  // namespace affagg
