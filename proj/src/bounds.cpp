#include "affagg/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "affagg/errors.hpp"
#include "affagg/procedures.hpp"

namespace affagg::bounds {

namespace {

double log_m(std::size_t M) {
    if (M == 0) throw DomainError("bounds: M must be positive");
    return std::log(static_cast<double>(M));
}

// ||(I - P_J) f||^2 for the columns flagged in `mask`.
double residual(const Matrix& design, const Vector& f, std::uint32_t mask) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < static_cast<std::size_t>(design.cols()); ++j) {
        if (mask & (1u << j)) cols.push_back(j);
    }
    const ProjectionResult pr = make_projection(design, cols);
    return (f - pr.estimator.apply(f)).squaredNorm();
}

}  // namespace

double gaussian_excess(double sigma2, std::size_t M, double x) { return 46.0 * sigma2 * (2.0 * log_m(M) + x); }

double gaussian_expected_excess(double sigma2, std::size_t M) { return 92.0 * sigma2 * (1.0 + log_m(M)); }

double plugin_excess(double sigma2, std::size_t M, double x) { return 64.0 * sigma2 * (x + 2.0 * log_m(M)); }

double subgaussian_excess(double sigma_bar2, std::size_t M, double x) {
    return 46.0 * sigma_bar2 * (2.0 * log_m(M) + x);
}

double kregressor_excess(double sigma2, std::size_t k, std::size_t p, double x) {
    if (k == 0 || k > p) throw DomainError("kregressor_excess: need 1 <= k <= p");
    const double kk = static_cast<double>(k);
    return 92.0 * sigma2 * (kk * std::log(std::exp(1.0) * static_cast<double>(p) / kk) + x);
}

double best_k_sparse_residual(const Matrix& design, const Vector& f, std::size_t k) {
    const auto p = static_cast<std::size_t>(design.cols());
    k = std::min(k, p);
    double count = 0.0;
    for (std::size_t s = 0; s <= k; ++s) count += binomial(p, s);
    if (count > static_cast<double>(kDefaultSupportCap)) {
        throw CapacityError("best_k_sparse_residual: support count", static_cast<std::size_t>(std::min(count, 1e18)),
                            kDefaultSupportCap);
    }
    double best = f.squaredNorm();
    for (std::size_t s = 1; s <= k; ++s) {
        std::vector<std::size_t> idx(s);
        for (std::size_t i = 0; i < s; ++i) idx[i] = i;
        for (;;) {
            const ProjectionResult pr = make_projection(design, idx);
            best = std::min(best, (f - pr.estimator.apply(f)).squaredNorm());
            std::size_t i = s;
            while (i > 0 && idx[i - 1] == p - s + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < s; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return best;
}

double sparsity_rhs(const Matrix& design, const Vector& f, double k2, double khat2, double x) {
    const auto p = static_cast<std::size_t>(design.cols());
    if (p > 20) throw CapacityError("sparsity_rhs: p", p, 20);
    const double pp = static_cast<double>(p);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << p); ++mask) {
        const double s = static_cast<double>(__builtin_popcount(mask));
        const double complexity = 0.5 + 2.0 * s * std::log(std::exp(1.0) * pp / std::max(1.0, s));
        best = std::min(best, residual(design, f, mask) + (64.0 * khat2 + 4.0 * k2) * complexity);
    }
    return best + 31.0 * k2 * x;
}

double prior_projector_deviation(double k2, double x) { return 28.0 * k2 * x; }

}  // namespace affagg::bounds
