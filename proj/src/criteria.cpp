#include "affagg/criteria.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace affagg {

namespace {

constexpr double kClipTol = 1e-12;
constexpr double kSumTol = 1e-10;

void check_size(const EstimatorBank& bank, const SimplexPoint& theta) {
    if (theta.size() != bank.size()) throw DimensionError("simplex point vs bank size", bank.size(), theta.size());
}

void check_variance(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(name) + " must be finite and >= 0");
}

double entropy(const Prior& prior, const SimplexPoint& theta) {
    if (prior.size() != theta.size()) throw DimensionError("prior vs simplex point", theta.size(), prior.size());
    return prior.neg_log().dot(theta.weights());
}

}  // namespace

SimplexPoint::SimplexPoint(Vector weights) : w_(std::move(weights)) {
    if (w_.size() == 0) throw DomainError("simplex point must be non-empty");
    if (!w_.allFinite()) throw DomainError("simplex point has non-finite entries");
    for (auto& x : w_) {
        if (x < -kClipTol) throw DomainError("simplex point has negative weight " + std::to_string(x));
        if (x < 0.0) x = 0.0;
    }
    const double s = w_.sum();
    if (std::abs(s - 1.0) > 1e-6) throw DomainError("simplex point weights sum to " + std::to_string(s));
    if (std::abs(s - 1.0) > 0.0) w_ /= s;
    if (std::abs(w_.sum() - 1.0) > kSumTol) throw DomainError("simplex point normalisation failed");
}

SimplexPoint SimplexPoint::vertex(std::size_t m, std::size_t j) {
    if (j >= m) throw DimensionError("vertex index", m, j);
    Vector w = Vector::Zero(static_cast<Eigen::Index>(m));
    w(static_cast<Eigen::Index>(j)) = 1.0;
    return SimplexPoint(std::move(w));
}

SimplexPoint SimplexPoint::uniform(std::size_t m) {
    return SimplexPoint(Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m)));
}

Prior::Prior(Vector pi) : pi_(std::move(pi)) {
    if (pi_.size() == 0) throw DomainError("prior must be non-empty");
    if (!pi_.allFinite() || pi_.minCoeff() <= 0.0) throw DomainError("prior weights must be finite and > 0");
    if (std::abs(pi_.sum() - 1.0) > kSumTol) {
        throw DomainError("prior weights sum to " + std::to_string(pi_.sum()) + ", expected 1");
    }
    neg_log_ = -pi_.array().log().matrix();
}

Prior Prior::uniform(std::size_t m) {
    return Prior(Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m)));
}

double QPProblem::evaluate(const Vector& theta) const {
    return 0.5 * theta.dot(gram * theta) + lin.dot(theta) + constant;
}

Vector QPProblem::gradient(const Vector& theta) const { return gram * theta + lin; }

void to_json(nlohmann::json& j, const QPProblem& p) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < p.gram.rows(); ++r) {
        rows.push_back(std::vector<double>(p.gram.row(r).begin(), p.gram.row(r).end()));
    }
    j = nlohmann::json{{"gram", rows},
                       {"lin", std::vector<double>(p.lin.begin(), p.lin.end())},
                       {"constant", p.constant}};
}

void from_json(const nlohmann::json& j, QPProblem& p) {
    auto lin = j.at("lin").get<std::vector<double>>();
    const auto m = static_cast<Eigen::Index>(lin.size());
    p.lin = Eigen::Map<const Vector>(lin.data(), m);
    p.gram.resize(m, m);
    const auto& rows = j.at("gram");
    if (static_cast<Eigen::Index>(rows.size()) != m) {
        throw DimensionError("QPProblem json: gram rows", lin.size(), rows.size());
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != m) throw DimensionError("QPProblem json: gram row", lin.size(), row.size());
        p.gram.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), m);
    }
    p.constant = j.value("constant", 0.0);
}

std::string_view to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::cp: return "cp";
        case ObjectiveKind::h_pen: return "h_pen";
        case ObjectiveKind::v_pen: return "v_pen";
        case ObjectiveKind::w_pen: return "w_pen";
        case ObjectiveKind::u: return "u";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(std::string_view name) {
    if (name == "cp") return ObjectiveKind::cp;
    if (name == "h_pen") return ObjectiveKind::h_pen;
    if (name == "v_pen") return ObjectiveKind::v_pen;
    if (name == "w_pen") return ObjectiveKind::w_pen;
    if (name == "u") return ObjectiveKind::u;
    throw std::invalid_argument("unknown objective kind '" + std::string(name) + "'");
}

double ObjectiveSpec::trace_variance() const { return kind == ObjectiveKind::u ? 0.0 : variance; }

double ObjectiveSpec::entropy_coefficient() const {
    switch (kind) {
        case ObjectiveKind::v_pen: return 46.0 * variance;
        case ObjectiveKind::u: return 32.0 * khat2;
        default: return 0.0;
    }
}

double ObjectiveSpec::quadratic_weight() const { return kind == ObjectiveKind::cp ? 1.0 : 0.5; }

// ---------------------------------------------------------------------------

double penalty(const EstimatorBank& bank, const SimplexPoint& theta) {
    check_size(bank, theta);
    const Vector& t = theta.weights();
    return bank.gram().diagonal().dot(t) - t.dot(bank.gram() * t);
}

double cp_criterion(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta) {
    check_variance(sigma2, "sigma2");
    check_size(bank, theta);
    const Vector& t = theta.weights();
    return t.dot(bank.gram() * t) - 2.0 * bank.y_dot_fits().dot(t) + 2.0 * sigma2 * bank.traces().dot(t);
}

double h_pen(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta) {
    return cp_criterion(bank, sigma2, theta) + 0.5 * penalty(bank, theta);
}

double v_pen(const EstimatorBank& bank, double sigma2, const Prior& prior, const SimplexPoint& theta) {
    return h_pen(bank, sigma2, theta) + 46.0 * sigma2 * entropy(prior, theta);
}

double w_pen(const EstimatorBank& bank, double sigma2_hat, const SimplexPoint& theta) {
    check_variance(sigma2_hat, "sigma2_hat");
    return h_pen(bank, sigma2_hat, theta);
}

double u_objective(const EstimatorBank& bank, double khat2, const Prior& prior, const SimplexPoint& theta) {
    check_variance(khat2, "khat2");
    return cp_criterion(bank, 0.0, theta) + 0.5 * penalty(bank, theta) + 32.0 * khat2 * entropy(prior, theta);
}

double evaluate(const EstimatorBank& bank, const ObjectiveSpec& spec, const SimplexPoint& theta) {
    switch (spec.kind) {
        case ObjectiveKind::cp: return cp_criterion(bank, spec.variance, theta);
        case ObjectiveKind::h_pen: return h_pen(bank, spec.variance, theta);
        case ObjectiveKind::v_pen:
            if (!spec.prior) throw DomainError("v_pen requires a prior");
            return v_pen(bank, spec.variance, *spec.prior, theta);
        case ObjectiveKind::w_pen: return w_pen(bank, spec.variance, theta);
        case ObjectiveKind::u:
            if (!spec.prior) throw DomainError("u objective requires a prior");
            return u_objective(bank, spec.khat2, *spec.prior, theta);
    }
    throw std::invalid_argument("unknown objective kind");
}

QPProblem qp_reduce(const EstimatorBank& bank, const ObjectiveSpec& spec) {
    check_variance(spec.variance, "variance");
    check_variance(spec.khat2, "khat2");
    const Matrix& g = bank.gram();
    QPProblem out;
    // ||mu||^2 - 2 y^T mu + 2 s^2 Tr(A) is theta^T G theta + affine; the penalty
    // adds sum theta_j G_jj / 2 - theta^T G theta / 2.
    out.lin = -2.0 * bank.y_dot_fits() + 2.0 * spec.trace_variance() * bank.traces();
    if (spec.kind == ObjectiveKind::cp) {
        out.gram = 2.0 * g;
    } else {
        out.gram = g;
        out.lin += 0.5 * g.diagonal();
    }
    if (spec.kind == ObjectiveKind::v_pen || spec.kind == ObjectiveKind::u) {
        if (!spec.prior) throw DomainError(std::string(to_string(spec.kind)) + " requires a prior");
        if (spec.prior->size() != bank.size()) throw DimensionError("prior vs bank size", bank.size(), spec.prior->size());
        out.lin += spec.entropy_coefficient() * spec.prior->neg_log();
    }
    out.constant = 0.0;
    return out;
}

double delta_jk(const EstimatorBank& bank, const Vector& f, const Vector& xi, double sigma2, std::size_t j,
                std::size_t k) {
    const std::size_t n = bank.dim();
    if (static_cast<std::size_t>(f.size()) != n) throw DimensionError("delta_jk: f", n, static_cast<std::size_t>(f.size()));
    if (static_cast<std::size_t>(xi.size()) != n) throw DimensionError("delta_jk: xi", n, static_cast<std::size_t>(xi.size()));
    check_variance(sigma2, "sigma2");
    if (j == k) return 0.0;
    const AffineEstimator aj = bank.estimator(j);
    const AffineEstimator ak = bank.estimator(k);
    const Vector mean_diff = aj.apply_linear(f) - ak.apply_linear(f) + aj.offset() - ak.offset();
    const double chaos = xi.dot(aj.apply_linear(xi)) - xi.dot(ak.apply_linear(xi));
    return 2.0 * xi.dot(mean_diff) + 2.0 * (chaos - sigma2 * (aj.trace() - ak.trace()));
}

DecompositionQV decomposition_qv(const EstimatorBank& bank, const Vector& f, std::size_t j, std::size_t k) {
    const std::size_t n = bank.dim();
    if (static_cast<std::size_t>(f.size()) != n) {
        throw DimensionError("decomposition_qv: f", n, static_cast<std::size_t>(f.size()));
    }
    const AffineEstimator aj = bank.estimator(j);
    const AffineEstimator ak = bank.estimator(k);
    const Matrix b = ak.to_dense() - aj.to_dense();
    const auto ni = static_cast<Eigen::Index>(n);
    const Matrix two_i = 2.0 * Matrix::Identity(ni, ni);
    const Vector w = b * f + ak.offset() - aj.offset();
    return {(two_i - 0.5 * b.transpose()) * b, (two_i - b.transpose()) * w};
}

namespace direct {

Vector mixture_fit(const EstimatorBank& bank, const SimplexPoint& theta) {
    check_size(bank, theta);
    Vector out = Vector::Zero(static_cast<Eigen::Index>(bank.dim()));
    for (std::size_t j = 0; j < bank.size(); ++j) out += theta[j] * bank.fit(j);
    return out;
}

double penalty(const EstimatorBank& bank, const SimplexPoint& theta) {
    const Vector mu = mixture_fit(bank, theta);
    double acc = 0.0;
    for (std::size_t j = 0; j < bank.size(); ++j) acc += theta[j] * (mu - bank.fit(j)).squaredNorm();
    return acc;
}

double cp_criterion(const EstimatorBank& bank, double sigma2, const SimplexPoint& theta) {
    check_variance(sigma2, "sigma2");
    const Vector mu = mixture_fit(bank, theta);
    double tr = 0.0;
    for (std::size_t j = 0; j < bank.size(); ++j) tr += theta[j] * bank.traces()(static_cast<Eigen::Index>(j));
    return mu.squaredNorm() - 2.0 * bank.observation().dot(mu) + 2.0 * sigma2 * tr;
}

double evaluate(const EstimatorBank& bank, const ObjectiveSpec& spec, const SimplexPoint& theta) {
    const double cp = direct::cp_criterion(bank, spec.trace_variance(), theta);
    if (spec.kind == ObjectiveKind::cp) return cp;
    double out = cp + 0.5 * direct::penalty(bank, theta);
    if (spec.kind == ObjectiveKind::v_pen || spec.kind == ObjectiveKind::u) {
        if (!spec.prior) throw DomainError("objective requires a prior");
        double ent = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) ent += theta[j] * std::log(1.0 / spec.prior->pi()(static_cast<Eigen::Index>(j)));
        out += spec.entropy_coefficient() * ent;
    }
    return out;
}

}  // namespace direct

}  // namespace affagg
