#include "affagg/procedures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace affagg {

namespace {

void check_variance(const char* what, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + ": variance must be finite and >= 0");
}

std::vector<std::string> admissibility_warnings(const EstimatorBank& bank) {
    std::vector<std::string> out;
    for (std::size_t j : bank.inadmissible()) {
        out.push_back("estimator " + std::to_string(j) + " has operator norm > 1");
    }
    return out;
}

// Visit every k-subset of {0, ..., p-1} in lexicographic order.
template <class F>
void for_each_subset(std::size_t p, std::size_t k, F&& f) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    if (k > p) return;
    while (true) {
        f(static_cast<const std::vector<std::size_t>&>(idx));
        if (k == 0) return;
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == p - k + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return std::round(r);
}

AggregateOutput aggregate(const EstimatorBank& bank, const ObjectiveSpec& spec, const AggregateOptions& options) {
    const QPProblem qp = qp_reduce(bank, spec);
    SolveResult solve = solve_qp(qp, options.solve);
    std::vector<std::string> warnings;
    if (options.check_assumptions) warnings = admissibility_warnings(bank);
    if (!solve.converged) {
        std::ostringstream os;
        os << "solver stopped after " << solve.iterations << " iterations with KKT residual " << solve.kkt_residual;
        warnings.push_back(os.str());
    }
    Vector fitted = bank.fits() * solve.theta.weights();
    SimplexPoint theta = solve.theta;
    return AggregateOutput{std::move(theta), std::move(fitted), std::move(solve), spec.kind, std::move(warnings)};
}

AggregateOutput q_aggregate(const EstimatorBank& bank, double sigma2, const AggregateOptions& options) {
    check_variance("q_aggregate", sigma2);
    return aggregate(bank, ObjectiveSpec::h_pen(sigma2), options);
}

AggregateOutput q_aggregate_prior(const EstimatorBank& bank, double sigma2, const Prior& prior,
                                  const AggregateOptions& options) {
    check_variance("q_aggregate_prior", sigma2);
    if (prior.size() != bank.size()) throw DimensionError("q_aggregate_prior: prior", bank.size(), prior.size());
    return aggregate(bank, ObjectiveSpec::v_pen(sigma2, prior), options);
}

AggregateOutput q_aggregate_plugin_variance(const EstimatorBank& bank, double sigma2_hat,
                                            const AggregateOptions& options) {
    check_variance("q_aggregate_plugin_variance", sigma2_hat);
    AggregateOutput out = aggregate(bank, ObjectiveSpec::w_pen(sigma2_hat), options);
    if (options.check_assumptions && !bank.all_projectors()) {
        out.warnings.push_back("plug-in variance guarantee assumes every estimator is an orthogonal projector");
    }
    return out;
}

AggregateOutput q_aggregate_subgaussian(const EstimatorBank& bank, double sigma2, const AggregateOptions& options) {
    return q_aggregate(bank, sigma2, options);
}

AggregateOutput cp_minimize(const EstimatorBank& bank, double sigma2, const AggregateOptions& options) {
    check_variance("cp_minimize", sigma2);
    return aggregate(bank, ObjectiveSpec::cp(sigma2), options);
}

std::size_t erm_cp_select(const EstimatorBank& bank, double sigma2) {
    check_variance("erm_cp_select", sigma2);
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double v = bank.gram()(jj, jj) - 2.0 * bank.y_dot_fits()(jj) + 2.0 * sigma2 * bank.traces()(jj);
        if (v < best_val) {
            best_val = v;
            best = j;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------

SimplexPoint MaureyGrid::point(std::size_t i) const {
    return SimplexPoint(points.row(static_cast<Eigen::Index>(i)).transpose());
}

std::size_t maurey_m(std::size_t M, std::size_t n) {
    if (M == 0 || n == 0) throw DomainError("maurey_m: M and n must be positive");
    const double nn = static_cast<double>(n);
    const double denom = std::log1p(static_cast<double>(M) / std::sqrt(nn));
    const auto m = static_cast<std::size_t>(std::floor(std::sqrt(nn / denom)));
    if (m == 0) throw DomainError("maurey_m: grid resolution m = 0 (M too large for n)");
    return m;
}

std::size_t maurey_grid_count(std::size_t M, std::size_t m) {
    if (M == 0) return 0;
    // C(M + m - 1, m) by the multiplicative formula with exact division at each step.
    const std::size_t k = std::min(m, M - 1);
    const std::size_t top = M + m - 1;
    unsigned __int128 r = 1;
    const auto cap = static_cast<unsigned __int128>(std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * (top - k + i) / i;
        if (r > cap) return std::numeric_limits<std::size_t>::max();
    }
    return static_cast<std::size_t>(r);
}

MaureyGrid maurey_grid(std::size_t M, std::size_t m, std::size_t cap) {
    if (M == 0) throw DomainError("maurey_grid: M must be positive");
    if (m == 0) throw DomainError("maurey_grid: m must be at least 1");
    const std::size_t count = maurey_grid_count(M, m);
    if (count > cap) throw CapacityError("maurey_grid: point count", count, cap);

    MaureyGrid g{M, m, Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(M))};
    // Compositions of m into M parts, first coordinate descending from m; the
    // first row is e_1.
    std::vector<std::size_t> c(M, 0);
    c[0] = m;
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t row = 0; row < count; ++row) {
        for (std::size_t j = 0; j < M; ++j) {
            g.points(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = static_cast<double>(c[j]) * inv;
        }
        if (row + 1 == count) break;
        // Next composition in reverse-lexicographic order.
        std::size_t pos = M - 2;
        while (c[pos] == 0) --pos;
        const std::size_t tail = c[M - 1];
        c[M - 1] = 0;
        --c[pos];
        c[pos + 1] = tail + 1;
    }
    return g;
}

MaureyGrid maurey_grid_for(std::size_t M, std::size_t n, std::size_t cap) {
    return maurey_grid(M, maurey_m(M, n), cap);
}

ConvexAggregateOutput convex_aggregate(const EstimatorBank& bank, double sigma2, const ConvexOptions& options) {
    check_variance("convex_aggregate", sigma2);
    const std::size_t M = bank.size();
    if (M == 1) {
        AggregateOutput out = q_aggregate(bank, sigma2, options.aggregate);
        MaureyGrid grid{1, 1, Matrix::Ones(1, 1)};
        SimplexPoint theta = out.theta;
        return ConvexAggregateOutput{std::move(out), std::move(theta), std::move(grid)};
    }
    const std::size_t m = options.m.value_or(maurey_m(M, bank.dim()));
    const std::size_t count = maurey_grid_count(M, m);
    if (count > options.bank_cap) throw CapacityError("convex_aggregate: grid bank size", count, options.bank_cap);
    MaureyGrid grid = maurey_grid(M, m, options.grid_cap);

    const EstimatorBank grid_bank = EstimatorBank::mixture(bank, grid.points);
    AggregateOutput inner = q_aggregate(grid_bank, sigma2, options.aggregate);
    Vector mapped = grid.points.transpose() * inner.theta.weights();
    SimplexPoint theta(std::move(mapped));
    return ConvexAggregateOutput{std::move(inner), std::move(theta), std::move(grid)};
}

double maurey_bound(const QPProblem& q, std::size_t m) {
    if (m == 0) throw DomainError("maurey_bound: m must be at least 1");
    // q = 0.5 theta^T G theta + ..., so Sigma = G / 2.
    const double max_sigma = 0.5 * q.gram.diagonal().maxCoeff();
    return 4.0 * max_sigma / static_cast<double>(m);
}

double maurey_gap(const QPProblem& q, const MaureyGrid& grid) {
    constexpr std::size_t kMaxM = 5;
    if (q.size() > kMaxM) throw CapacityError("maurey_gap: dimension", q.size(), kMaxM);
    if (grid.M != q.size()) throw DimensionError("maurey_gap: grid", q.size(), grid.M);
    double grid_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid_min = std::min(grid_min, q.evaluate(grid.points.row(static_cast<Eigen::Index>(i)).transpose()));
    }
    const SolveResult s = solve_qp(q);
    return grid_min - s.objective;
}

// ---------------------------------------------------------------------------

SparsitySpec make_sparsity_spec(Matrix design, std::size_t k_max, double khat2, std::size_t max_supports) {
    const auto p = static_cast<std::size_t>(design.cols());
    if (p == 0 || design.rows() == 0) throw DomainError("make_sparsity_spec: empty design");
    if (!(khat2 >= 0.0)) throw DomainError("make_sparsity_spec: khat2 must be >= 0");
    if (k_max == 0) k_max = std::min<std::size_t>(p, 8);
    k_max = std::min(k_max, p);

    double total = 0.0;
    for (std::size_t s = 0; s <= k_max; ++s) total += binomial(p, s);
    if (total > static_cast<double>(max_supports)) {
        throw CapacityError("make_sparsity_spec: support count", static_cast<std::size_t>(std::min(total, 1e18)),
                            max_supports);
    }

    std::vector<std::vector<std::size_t>> supports;
    supports.reserve(static_cast<std::size_t>(total));
    for (std::size_t s = 0; s <= k_max; ++s) {
        for_each_subset(p, s, [&](const std::vector<std::size_t>& idx) { supports.push_back(idx); });
    }

    Vector w(static_cast<Eigen::Index>(supports.size()));
    for (std::size_t i = 0; i < supports.size(); ++i) {
        const std::size_t s = supports[i].size();
        w(static_cast<Eigen::Index>(i)) = std::exp(-static_cast<double>(s)) / binomial(p, s);
    }
    w /= w.sum();
    Prior prior(std::move(w));

    auto projectors = std::make_shared<std::vector<AffineEstimator>>();
    projectors->reserve(supports.size());
    std::vector<std::size_t> violations;
    for (std::size_t i = 0; i < supports.size(); ++i) {
        ProjectionResult pr = make_projection(design, supports[i]);
        if (static_cast<double>(pr.rank) > prior.neg_log()(static_cast<Eigen::Index>(i)) + 1e-12) {
            violations.push_back(i);
        }
        projectors->push_back(std::move(pr.estimator));
    }

    SparsitySpec spec{std::move(design), k_max, khat2, std::move(supports), std::move(prior),
                      std::move(projectors), std::move(violations)};
    return spec;
}

AggregateOutput sparsity_pattern_aggregate(const SparsitySpec& spec, const Vector& y, const AggregateOptions& options) {
    if (y.size() != spec.design.rows()) {
        throw DimensionError("sparsity_pattern_aggregate: y", static_cast<std::size_t>(spec.design.rows()),
                             static_cast<std::size_t>(y.size()));
    }
    const EstimatorBank bank(spec.projectors, y);
    AggregateOptions opts = options;
    // Projectors are admissible by construction.
    opts.check_assumptions = false;
    AggregateOutput out = aggregate(bank, ObjectiveSpec::u(spec.khat2, spec.prior), opts);
    if (!spec.trace_violations.empty()) {
        out.warnings.push_back(std::to_string(spec.trace_violations.size()) +
                               " supports violate Tr(A_J) <= log(1/pi_J)");
    }
    return out;
}

KRegressorFamily make_kregressor_family(const Matrix& design, std::size_t k, std::size_t max_subsets) {
    const auto p = static_cast<std::size_t>(design.cols());
    if (k == 0 || k > p) throw DomainError("make_kregressor_family: need 1 <= k <= p");
    const double count = binomial(p, k);
    if (count > static_cast<double>(max_subsets)) {
        throw CapacityError("make_kregressor_family: subset count", static_cast<std::size_t>(std::min(count, 1e18)),
                            max_subsets);
    }
    KRegressorFamily fam;
    auto projectors = std::make_shared<std::vector<AffineEstimator>>();
    for_each_subset(p, k, [&](const std::vector<std::size_t>& idx) {
        ProjectionResult pr = make_projection(design, idx);
        if (pr.rank_deficient) return;
        fam.supports.push_back(idx);
        projectors->push_back(std::move(pr.estimator));
    });
    if (projectors->empty()) throw DomainError("make_kregressor_family: no full-rank k-subset");
    fam.projectors = std::move(projectors);
    return fam;
}

AggregateOutput kregressor_aggregate(const Matrix& design, std::size_t k, const Vector& y, double sigma2,
                                     const AggregateOptions& options) {
    if (y.size() != design.rows()) {
        throw DimensionError("kregressor_aggregate: y", static_cast<std::size_t>(design.rows()),
                             static_cast<std::size_t>(y.size()));
    }
    const KRegressorFamily fam = make_kregressor_family(design, k);
    AggregateOptions opts = options;
    opts.check_assumptions = false;
    return q_aggregate(EstimatorBank(fam.projectors, y), sigma2, opts);
}

// ---------------------------------------------------------------------------

OracleBound oracle_bound(const EstimatorBank& bank, const ObjectiveSpec& spec, const Vector& fitted, const Vector& f,
                         const Vector& xi) {
    const auto n = static_cast<Eigen::Index>(bank.dim());
    if (fitted.size() != n) throw DimensionError("oracle_bound: fitted", bank.dim(), static_cast<std::size_t>(fitted.size()));
    if (f.size() != n) throw DimensionError("oracle_bound: f", bank.dim(), static_cast<std::size_t>(f.size()));
    if (xi.size() != n) throw DimensionError("oracle_bound: xi", bank.dim(), static_cast<std::size_t>(xi.size()));

    const auto M = static_cast<Eigen::Index>(bank.size());
    const double s2 = spec.trace_variance();
    const double beta = spec.entropy_coefficient();
    const double kappa = spec.kind == ObjectiveKind::cp ? 0.0 : 0.5;
    Vector ell = Vector::Zero(M);
    if (beta != 0.0) ell = spec.prior->neg_log();

    const Matrix& G = bank.gram();
    const Vector risks = (bank.fits().colwise() - f).colwise().squaredNorm().transpose();
    const Vector a = 2.0 * (bank.fits().transpose() * xi) - 2.0 * s2 * bank.traces();

    OracleBound b;
    b.lhs = (fitted - f).squaredNorm();
    b.oracle_term = (risks + 2.0 * beta * ell).minCoeff();
    double zmax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < M; ++j) {
        for (Eigen::Index k = 0; k < M; ++k) {
            const double dist = std::max(0.0, G(j, j) + G(k, k) - 2.0 * G(j, k));
            const double z = a(j) - a(k) - beta * (ell(j) + ell(k)) - kappa * dist;
            zmax = std::max(zmax, z);
        }
    }
    b.max_pair_term = zmax;
    return b;
}

}  // namespace affagg
