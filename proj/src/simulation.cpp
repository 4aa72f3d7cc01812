#include "affagg/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace affagg {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    return r * std::cos(a);
}

std::size_t Rng::index(std::size_t lo, std::size_t hi) {
    if (hi < lo) throw DomainError("Rng::index: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::size_t>(engine_());
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return lo + static_cast<std::size_t>(v % span);
}

Vector Rng::normal_vector(std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = normal();
    return v;
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal();
    }
    return m;
}

std::string_view to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::rademacher: return "rademacher";
        case NoiseKind::uniform: return "uniform";
    }
    return "?";
}

NoiseKind noise_kind_from_string(std::string_view name) {
    if (name == "gaussian") return NoiseKind::gaussian;
    if (name == "rademacher") return NoiseKind::rademacher;
    if (name == "uniform") return NoiseKind::uniform;
    throw DomainError("unknown noise kind '" + std::string(name) + "'");
}

Vector gen_noise(const NoiseModel& model, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw DomainError("gen_noise: n must be at least 1");
    if (!(model.sigma > 0.0) || !std::isfinite(model.sigma)) throw DomainError("gen_noise: sigma must be positive");
    Rng rng(seed);
    Vector out(static_cast<Eigen::Index>(n));
    switch (model.kind) {
        case NoiseKind::gaussian:
            for (auto& x : out) x = model.sigma * rng.normal();
            break;
        case NoiseKind::rademacher:
            for (auto& x : out) x = rng.uniform() < 0.5 ? -model.sigma : model.sigma;
            break;
        case NoiseKind::uniform: {
            const double half = model.sigma * std::sqrt(3.0);
            for (auto& x : out) x = half * (2.0 * rng.uniform() - 1.0);
            break;
        }
    }
    return out;
}

std::string_view to_string(VariancePolicy policy) {
    switch (policy) {
        case VariancePolicy::known: return "known";
        case VariancePolicy::plugin: return "plugin";
        case VariancePolicy::difference: return "difference";
    }
    return "?";
}

VariancePolicy variance_policy_from_string(std::string_view name) {
    if (name == "known") return VariancePolicy::known;
    if (name == "plugin") return VariancePolicy::plugin;
    if (name == "difference") return VariancePolicy::difference;
    throw DomainError("unknown variance policy '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

bool TrialRecord::role_holds() const {
    if (std::isnan(role_slack)) return true;
    return role_slack >= -10.0 * tol;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads == 1) {
        for (std::size_t t = 0; t < count; ++t) body(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= count) return;
            try {
                body(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

ObjectiveSpec make_spec(const TrialSetup& s, double variance) {
    switch (s.objective) {
        case ObjectiveKind::cp: return ObjectiveSpec::cp(variance);
        case ObjectiveKind::h_pen: return ObjectiveSpec::h_pen(variance);
        case ObjectiveKind::w_pen: return ObjectiveSpec::w_pen(variance);
        case ObjectiveKind::v_pen:
            if (!s.prior) throw DomainError("v_pen trials need a prior");
            return ObjectiveSpec::v_pen(variance, *s.prior);
        case ObjectiveKind::u:
            if (!s.prior) throw DomainError("u trials need a prior");
            return ObjectiveSpec::u(s.khat2, *s.prior);
    }
    throw DomainError("unknown objective");
}

void run_one(const TrialSetup& s, std::size_t t, TrialRecord& rec) {
    rec.seed = s.base_seed + t;
    const auto n = static_cast<std::size_t>(s.f.size());
    const Vector xi = gen_noise(s.noise, n, rec.seed);
    const Vector y = s.f + xi;

    const EstimatorBank base(s.family, y);
    const Vector base_risks = (base.fits().colwise() - s.f).colwise().squaredNorm().transpose();
    Eigen::Index oracle = 0;
    rec.oracle_risk = base_risks.minCoeff(&oracle);
    rec.oracle_index = static_cast<std::size_t>(oracle);

    double variance = s.sigma2;
    if (s.variance_policy == VariancePolicy::difference) variance = difference_variance(y);
    rec.sigma2_used = variance;

    if (s.select_vertex) {
        const std::size_t j = erm_cp_select(base, variance);
        rec.risk = base_risks(static_cast<Eigen::Index>(j));
        rec.excess_risk = rec.risk - rec.oracle_risk;
        return;
    }

    const EstimatorBank bank = s.mixing ? EstimatorBank::mixture(base, *s.mixing) : base;
    const ObjectiveSpec spec = make_spec(s, variance);
    AggregateOptions opts;
    opts.solve = s.solve;
    opts.check_assumptions = false;
    const QPProblem qp = qp_reduce(bank, spec);
    rec.tol = s.solve.tol.value_or(default_tolerance(qp));
    const AggregateOutput out = aggregate(bank, spec, opts);
    rec.kkt_residual = out.solve.kkt_residual;
    rec.iterations = out.solve.iterations;
    rec.converged = out.solve.converged;
    rec.risk = (out.fitted - s.f).squaredNorm();
    rec.excess_risk = rec.risk - rec.oracle_risk;

    const OracleBound b = oracle_bound(bank, spec, out.fitted, s.f, xi);
    rec.role_lhs = b.lhs;
    rec.role_rhs = b.rhs();
    rec.role_slack = b.rhs() - b.lhs;
    rec.prior_oracle = b.oracle_term;
}

}  // namespace

std::vector<TrialRecord> run_trials(const TrialSetup& setup) {
    if (!setup.family || setup.family->empty()) throw DomainError("run_trials: empty estimator family");
    if (setup.f.size() == 0) throw DomainError("run_trials: empty truth f");
    const auto n = static_cast<std::size_t>(setup.f.size());
    if (setup.family->front().dim() != n) throw DimensionError("run_trials: f", setup.family->front().dim(), n);
    if (setup.mixing && static_cast<std::size_t>(setup.mixing->cols()) != setup.family->size()) {
        throw DimensionError("run_trials: mixing columns", setup.family->size(),
                             static_cast<std::size_t>(setup.mixing->cols()));
    }
    std::vector<TrialRecord> records(setup.trials);
    parallel_for(setup.trials, setup.threads, [&](std::size_t t) {
        TrialRecord& rec = records[t];
        try {
            run_one(setup, t, rec);
        } catch (const std::exception& e) {
            rec.error = e.what();
            if (rec.error.empty()) rec.error = "error";
        }
    });
    return records;
}

// ---------------------------------------------------------------------------

double wilson_upper(std::size_t k, std::size_t n, double z) {
    if (n == 0) throw DomainError("wilson_upper: n must be positive");
    if (k > n) throw DomainError("wilson_upper: k > n");
    if (k == n) return 1.0;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double centre = p + z2 / (2.0 * nn);
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return std::min(1.0, (centre + half) / (1.0 + z2 / nn));
}

bool TailCheckReport::all_pass() const {
    return std::all_of(pass.begin(), pass.end(), [](bool b) { return b; });
}

TailCheckReport tail_check(const std::vector<double>& values, const std::function<double(double)>& bound,
                           const std::vector<double>& x_levels, const std::function<double(double)>& tail_prob,
                           double slack) {
    if (values.size() < kMinTailRecords) {
        throw DomainError("tail_check: need at least " + std::to_string(kMinTailRecords) + " records, got " +
                          std::to_string(values.size()));
    }
    if (!(slack >= 0.0)) throw DomainError("tail_check: slack must be >= 0");
    TailCheckReport r;
    r.trials = values.size();
    for (double x : x_levels) {
        const double b = bound(x);
        std::size_t k = 0;
        for (double v : values) {
            if (std::isnan(v) || v > b) ++k;
        }
        const double theo = tail_prob(x);
        const double wu = wilson_upper(k, values.size());
        r.x_levels.push_back(x);
        r.bounds.push_back(b);
        r.exceed_count.push_back(k);
        r.empirical_exceed.push_back(static_cast<double>(k) / static_cast<double>(values.size()));
        r.theoretical.push_back(theo);
        r.wilson_upper.push_back(wu);
        r.pass.push_back(wu <= theo * (1.0 + slack));
    }
    return r;
}

TailCheckReport tail_check(const std::vector<TrialRecord>& records, const std::function<double(double)>& bound,
                           const std::vector<double>& x_levels, const std::function<double(double)>& tail_prob,
                           double slack) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.ok() ? r.excess_risk : std::numeric_limits<double>::quiet_NaN());
    return tail_check(values, bound, x_levels, tail_prob, slack);
}

MeanSummary mean_summary(const std::vector<double>& values, double z) {
    if (values.size() < 2) throw DomainError("mean_summary: need at least 2 values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (n - 1.0) / n);
    return {mean, se, mean + z * se};
}

double median(std::vector<double> values) {
    if (values.empty()) throw DomainError("median: no values");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

namespace {

// Runs `trials` draws in fixed-size blocks so the per-block partial results,
// and hence the totals, do not depend on the thread count.
constexpr std::size_t kBlock = 1000;

template <class PerDraw>
std::vector<std::vector<double>> block_map(std::size_t trials, std::size_t threads, PerDraw&& per_draw) {
    const std::size_t blocks = (trials + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> out(blocks);
    parallel_for(blocks, threads, [&](std::size_t b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(trials, lo + kBlock);
        out[b].reserve(hi - lo);
        for (std::size_t t = lo; t < hi; ++t) out[b].push_back(per_draw(t));
    });
    return out;
}

std::vector<double> flatten(std::vector<std::vector<double>> blocks) {
    std::vector<double> out;
    for (auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

IdentityCheckReport expectation_identity_check(const AffineEstimator& a_j, const AffineEstimator& a_k, const Vector& f,
                                               const NoiseModel& model, std::size_t trials, std::uint64_t seed,
                                               std::size_t threads) {
    const std::size_t n = a_j.dim();
    if (a_k.dim() != n) throw DimensionError("expectation_identity_check: estimators", n, a_k.dim());
    if (static_cast<std::size_t>(f.size()) != n) throw DimensionError("expectation_identity_check: f", n, static_cast<std::size_t>(f.size()));
    if (trials < 2) throw DomainError("expectation_identity_check: need at least 2 trials");

    const Matrix diff = a_j.to_dense() - a_k.to_dense();
    const Vector mean_diff = diff * f + a_j.offset() - a_k.offset();
    const double sigma2 = model.sigma * model.sigma;

    IdentityCheckReport r;
    r.trials = trials;
    r.closed_form = 0.5 * mean_diff.squaredNorm() + 0.5 * sigma2 * diff.squaredNorm();
    const auto values = flatten(block_map(trials, threads, [&](std::size_t t) {
        const Vector y = f + gen_noise(model, n, seed + t);
        return 0.5 * (a_j.apply(y) - a_k.apply(y)).squaredNorm();
    }));
    const MeanSummary m = mean_summary(values);
    r.mc_mean = m.mean;
    r.std_error = m.std_error;
    r.z_score = m.std_error > 0.0 ? (m.mean - r.closed_form) / m.std_error
                                  : (m.mean == r.closed_form ? 0.0 : std::numeric_limits<double>::infinity());
    return r;
}

std::string_view to_string(ChaosForm form) {
    switch (form) {
        case ChaosForm::gaussian: return "gaussian";
        case ChaosForm::hanson: return "hanson";
        case ChaosForm::hsu: return "hsu";
    }
    return "?";
}

ChaosForm chaos_form_from_string(std::string_view name) {
    if (name == "gaussian") return ChaosForm::gaussian;
    if (name == "hanson") return ChaosForm::hanson;
    if (name == "hsu") return ChaosForm::hsu;
    throw DomainError("unknown chaos form '" + std::string(name) + "'");
}

TailCheckReport chaos_tail_check(const Matrix& b, const NoiseModel& model, std::size_t trials,
                                 const std::vector<double>& x_levels, std::uint64_t seed, ChaosForm form,
                                 std::size_t threads) {
    if (b.rows() != b.cols()) throw DimensionError("chaos_tail_check: B not square", static_cast<std::size_t>(b.rows()),
                                                   static_cast<std::size_t>(b.cols()));
    const auto n = static_cast<std::size_t>(b.rows());
    const Matrix sym = 0.5 * (b + b.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    const double op = n ? eig.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
    const double nuc = eig.eigenvalues().cwiseAbs().sum();
    const double fro = sym.norm();
    const double tr = sym.trace();
    const double s = model.sigma;
    const double sbar = model.bar();

    const auto values = flatten(block_map(trials, threads, [&](std::size_t t) {
        const Vector xi = gen_noise(model, n, seed + t);
        const double q = xi.dot(sym * xi);
        return form == ChaosForm::hsu ? q : q - s * s * tr;
    }));

    auto bound = [&](double x) {
        switch (form) {
            case ChaosForm::gaussian: return 2.0 * s * s * fro * std::sqrt(x) + 2.0 * s * s * op * x;
            case ChaosForm::hanson: return 2.0 * s * sbar * fro * std::sqrt(x) + 2.0 * sbar * sbar * op * x;
            case ChaosForm::hsu: return sbar * sbar * (nuc + 2.0 * fro * std::sqrt(x) + 2.0 * op * x);
        }
        return 0.0;
    };
    return tail_check(values, bound, x_levels, [](double x) { return std::exp(-x); });
}

TailCheckReport linear_tail_check(const Vector& v, const NoiseModel& model, std::size_t trials,
                                  const std::vector<double>& x_levels, std::uint64_t seed, std::size_t threads) {
    const auto n = static_cast<std::size_t>(v.size());
    const double norm = v.norm();
    const double sbar = model.bar();
    const auto values = flatten(block_map(trials, threads, [&](std::size_t t) {
        return v.dot(gen_noise(model, n, seed + t));
    }));
    return tail_check(values, [&](double x) { return sbar * norm * std::sqrt(2.0 * x); }, x_levels,
                      [](double x) { return std::exp(-x); });
}

SimplexPoint random_simplex_point(Rng& rng, std::size_t m) {
    Vector w(static_cast<Eigen::Index>(m));
    for (auto& x : w) x = -std::log(rng.uniform_open_low());
    w /= w.sum();
    return SimplexPoint(std::move(w));
}

double strong_convexity_probe(const ObjectiveSpec& spec, const EstimatorBank& bank, std::size_t trials,
                              std::uint64_t seed) {
    const QPProblem qp = qp_reduce(bank, spec);
    const double w = spec.quadratic_weight();
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const SimplexPoint th = random_simplex_point(rng, bank.size());
        const SimplexPoint th0 = random_simplex_point(rng, bank.size());
        const double f1 = evaluate(bank, spec, th);
        const double f0 = evaluate(bank, spec, th0);
        const Vector g0 = qp.gradient(th0.weights());
        const double dist = (bank.fits() * (th.weights() - th0.weights())).squaredNorm();
        const double resid = f1 - f0 - g0.dot(th.weights() - th0.weights()) - w * dist;
        const double scale = std::max({1.0, std::abs(f1), std::abs(f0)});
        worst = std::max(worst, std::abs(resid) / scale);
    }
    return worst;
}

// ---------------------------------------------------------------------------

double IdentitySuiteReport::max() const {
    return std::max({bv_decomposition, taylor, quadratic_linear, decomposition_qv});
}

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

IdentitySuiteReport identity_suite(std::size_t instances, std::uint64_t seed, std::size_t n_max, std::size_t m_max) {
    if (n_max < 2 || m_max < 2) throw DomainError("identity_suite: need n_max, m_max >= 2");
    IdentitySuiteReport r;
    r.instances = instances;
    Rng rng(seed);
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n = rng.index(2, n_max);
        const std::size_t M = rng.index(2, m_max);
        const double scale = 1.0 / std::sqrt(static_cast<double>(n));
        std::vector<AffineEstimator> ests;
        ests.reserve(M);
        for (std::size_t j = 0; j < M; ++j) {
            ests.push_back(AffineEstimator::dense(scale * rng.normal_matrix(n, n), rng.normal_vector(n)));
        }
        const Vector f = rng.normal_vector(n);
        const double sigma2 = 0.1 + 2.0 * rng.uniform();
        const Vector xi = std::sqrt(sigma2) * rng.normal_vector(n);
        const EstimatorBank bank(std::move(ests), f + xi);

        const SimplexPoint theta = random_simplex_point(rng, M);
        const Vector mu = direct::mixture_fit(bank, theta);

        // Bias-variance decomposition at a random g.
        const Vector g = rng.normal_vector(n);
        double lhs = 0.0;
        for (std::size_t k = 0; k < M; ++k) lhs += theta[k] * (bank.fit(k) - g).squaredNorm();
        r.bv_decomposition = std::max(r.bv_decomposition, rel(lhs, (mu - g).squaredNorm() + penalty(bank, theta)));

        // Exact second-order expansion for each penalised objective.
        Vector pi(static_cast<Eigen::Index>(M));
        for (auto& x : pi) x = 0.05 + rng.uniform();
        const Prior prior(pi / pi.sum());
        for (const ObjectiveSpec& spec :
             {ObjectiveSpec::h_pen(sigma2), ObjectiveSpec::v_pen(sigma2, prior), ObjectiveSpec::w_pen(1.3 * sigma2),
              ObjectiveSpec::u(sigma2, prior)}) {
            r.taylor = std::max(r.taylor, strong_convexity_probe(spec, bank, 1, rng.index(0, 1u << 30)));
        }

        // pen(theta) + ||mu_theta - mu_k||^2 = sum_j theta_j ||mu_j - mu_k||^2.
        const std::size_t k = rng.index(0, M - 1);
        double rhs = 0.0;
        for (std::size_t j = 0; j < M; ++j) rhs += theta[j] * (bank.fit(j) - bank.fit(k)).squaredNorm();
        r.quadratic_linear = std::max(r.quadratic_linear, rel(penalty(bank, theta) + (mu - bank.fit(k)).squaredNorm(), rhs));

        // Chaos + linear decomposition of Delta - ||mu_j - mu_k||^2 / 2 with B = A_k - A_j.
        std::size_t a = rng.index(0, M - 1);
        std::size_t b = rng.index(0, M - 2);
        if (b >= a) ++b;
        const DecompositionQV qv = decomposition_qv(bank, f, a, b);
        const Matrix bm = bank.estimator(b).to_dense() - bank.estimator(a).to_dense();
        const Vector w = bm * f + bank.estimator(b).offset() - bank.estimator(a).offset();
        const double left = delta_jk(bank, f, xi, sigma2, b, a) - 0.5 * (bank.fit(a) - bank.fit(b)).squaredNorm();
        const double right = xi.dot(qv.q * xi) - sigma2 * qv.q.trace() + xi.dot(qv.v) - 0.5 * sigma2 * bm.squaredNorm() -
                             0.5 * w.squaredNorm();
        r.decomposition_qv = std::max(r.decomposition_qv, rel(left, right));
    }
    return r;
}

}  // namespace affagg
