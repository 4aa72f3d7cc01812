#ifndef AFFAGG_BOUNDS_HPP
#define AFFAGG_BOUNDS_HPP

#include <cstddef>

#include "affagg/estimators.hpp"

/// Right-hand sides of the oracle inequalities checked by the harness.
namespace affagg::bounds {

/// 46 sigma^2 (2 log M + x), holds with probability >= 1 - 2 e^{-x}.
double gaussian_excess(double sigma2, std::size_t M, double x);
/// 92 sigma^2 log(e M), bound on the expected excess risk.
double gaussian_expected_excess(double sigma2, std::size_t M);
/// 64 sigma^2 (x + 2 log M), plug-in variance on projector banks.
double plugin_excess(double sigma2, std::size_t M, double x);
/// 46 sigma_bar^2 (2 log M + x), subgaussian noise.
double subgaussian_excess(double sigma_bar2, std::size_t M, double x);
/// c sigma^2 (k log(e p / k) + x) with c = 92.
double kregressor_excess(double sigma2, std::size_t k, std::size_t p, double x);
/// min over supports |J| <= k of ||(I - P_J) f||^2.
double best_k_sparse_residual(const Matrix& design, const Vector& f, std::size_t k);

/**
 * inf over J subset of {1..p} of
 *   ||(I - P_J) f||^2 + 31 K^2 x + (64 khat^2 + 4 K^2)(1/2 + 2 |J| log(e p / max(1, |J|))).
 * Enumerates all 2^p supports; p must be at most 20.
 */
double sparsity_rhs(const Matrix& design, const Vector& f, double k2, double khat2, double x);

/// The x-dependent part of the prior-weighted subgaussian inequality: 28 K^2 x.
double prior_projector_deviation(double k2, double x);

}  // namespace affagg::bounds

#endif
