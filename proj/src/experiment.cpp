#include "affagg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "affagg/bounds.hpp"
#include "affagg/io.hpp"
#include "affagg/procedures.hpp"
#include "affagg/simulation.hpp"

namespace affagg {

using nlohmann::json;

const std::vector<ExperimentInfo>& experiments() {
    static const std::vector<ExperimentInfo> list{
        {"aggregate", "aggregate a bank once on a single observation and write the weights and fit", "plumbing"},
        {"simulate", "Monte Carlo trials of a procedure; asserts the deterministic KKT oracle inequality per trial",
         "deterministic oracle inequality for the penalised minimiser"},
        {"tail-check", "Monte Carlo tail of the excess risk against a sharp oracle inequality",
         "Gaussian deviation bound 46 sigma^2 (2 log M + x) w.p. 1 - 2e^-x"},
        {"adapt", "plug-in variance on a projector bank, tail against 64 sigma^2 (x + 2 log M)",
         "plug-in variance bound for orthogonal projectors"},
        {"identity-check", "random-instance algebraic identities and the expected squared difference identity",
         "exact second-order expansion of the penalised criteria"},
        {"concentration", "tails of Gaussian/subgaussian chaos and linear forms",
         "concentration inequalities for quadratic and linear forms"},
        {"maurey-check", "grid minimum versus simplex minimum of random quadratics",
         "Maurey approximation lemma 4 max Sigma_jj / m"},
        {"convex", "q-aggregation over the Maurey grid of a bank, compared with the best convex combination",
         "convex aggregation through the Maurey grid"},
        {"sparsity", "sparsity pattern aggregation with the exponential prior over supports",
         "sparsity oracle inequality w.p. 1 - delta - 3e^-x"},
        {"kregressor", "aggregation of all k-column least squares projectors",
         "k-regressor bound c sigma^2 (k log(ep/k) + x)"},
    };
    return list;
}

std::string list_experiments() {
    std::ostringstream os;
    std::size_t width = 0;
    for (const auto& e : experiments()) width = std::max(width, e.name.size());
    for (const auto& e : experiments()) {
        os << std::left << std::setw(static_cast<int>(width + 2)) << e.name << e.description << "\n"
           << std::string(width + 2, ' ') << "verifies: " << e.verifies << "\n";
    }
    return os.str();
}

json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
        return j;
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

void apply_override(json& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &config;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
        parts.push_back(part);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(parts[i]);
            } catch (const std::exception&) {
                throw ConfigError("override '" + key + "': '" + parts[i] + "' is not an array index");
            }
            if (idx >= node->size()) throw ConfigError("override '" + key + "': index " + parts[i] + " out of range");
            node = &(*node)[idx];
        } else {
            if (!node->is_object()) {
                if (node->is_null()) {
                    *node = json::object();
                } else {
                    throw ConfigError("override '" + key + "': '" + parts[i - 1] + "' is not an object");
                }
            }
            node = &(*node)[parts[i]];
        }
        if (last) *node = value;
    }
}

namespace {

// Typed access into a JSON object that records defaults it hands out, so the
// config echo shows the resolved values.
class Cfg {
public:
    Cfg(json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (j_.is_null()) j_ = json::object();
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    Cfg child(const std::string& key) {
        if (!has(key)) j_[key] = json::object();
        return Cfg(j_[key], field(key));
    }

    double number(const std::string& key, double def) {
        if (!has(key)) j_[key] = def;
        const json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(field(key) + " must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(field(key) + " must be finite");
        return d;
    }
    double positive(const std::string& key, double def) {
        const double d = number(key, def);
        if (!(d > 0.0)) throw ConfigError(field(key) + " must be > 0");
        return d;
    }
    double nonneg(const std::string& key, double def) {
        const double d = number(key, def);
        if (!(d >= 0.0)) throw ConfigError(field(key) + " must be >= 0");
        return d;
    }
    std::size_t count(const std::string& key, std::size_t def, std::size_t min = 1) {
        if (!has(key)) j_[key] = def;
        const json& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
            throw ConfigError(field(key) + " must be an integer >= " + std::to_string(min));
        }
        return v.get<std::size_t>();
    }
    std::uint64_t seed(const std::string& key, std::uint64_t def) {
        if (!has(key)) j_[key] = def;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError(field(key) + " must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::string str(const std::string& key, const std::string& def) {
        if (!has(key)) j_[key] = def;
        if (!j_.at(key).is_string()) throw ConfigError(field(key) + " must be a string");
        return j_.at(key).get<std::string>();
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!has(key)) j_[key] = def;
        const json& v = j_.at(key);
        if (!v.is_array() || v.empty()) throw ConfigError(field(key) + " must be a non-empty array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(field(key) + " must contain only numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<std::size_t> indices(const std::string& key, std::vector<std::size_t> def) {
        if (!has(key)) j_[key] = def;
        const json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(field(key) + " must be an array of integers");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 0) {
                throw ConfigError(field(key) + " must contain non-negative integers");
            }
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }
    std::filesystem::path file(const std::string& key) {
        if (!has(key) || !j_.at(key).is_string()) throw ConfigError(field(key) + " must be a file path");
        std::filesystem::path p = j_.at(key).get<std::string>();
        if (!std::filesystem::exists(p)) throw ConfigError(field(key) + ": file '" + p.string() + "' does not exist");
        return p;
    }
    const json& raw(const std::string& key) const { return j_.at(key); }
    void set_default(const std::string& key, const json& v) {
        if (!has(key)) j_[key] = v;
    }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : path_; }

private:
    json& j_;
    std::string path_;
};

template <class F>
auto config_guard(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Builders

Matrix build_design(Cfg c, std::size_t n) {
    const std::string kind = c.str("kind", "random");
    if (kind == "identity") return Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (kind == "random") {
        const std::size_t p = c.count("p", 8);
        Rng rng(c.seed("seed", 1));
        return rng.normal_matrix(n, p);
    }
    if (kind == "file") {
        const auto path = c.file("path");
        Matrix x = config_guard(c.field("path"), [&] { return read_matrix_csv(path); });
        if (static_cast<std::size_t>(x.rows()) != n) {
            throw ConfigError(c.field("path") + ": design has " + std::to_string(x.rows()) + " rows, n = " +
                              std::to_string(n));
        }
        return x;
    }
    throw ConfigError(c.field("kind") + ": unknown design kind '" + kind + "' (identity, random, file)");
}

Vector build_truth(Cfg c, std::size_t n, const std::optional<Matrix>& design) {
    const std::string kind = c.str("kind", "cosine");
    const auto ni = static_cast<Eigen::Index>(n);
    Vector f = Vector::Zero(ni);
    if (kind == "zero") return f;
    if (kind == "spike") {
        const std::size_t k = c.count("k", 1);
        const double a = c.number("amplitude", 5.0);
        if (k > n) throw ConfigError(c.field("k") + " exceeds n");
        f.head(static_cast<Eigen::Index>(k)).setConstant(a);
        return f;
    }
    if (kind == "cosine") {
        const double rms = c.nonneg("rms", 1.0);
        for (Eigen::Index i = 0; i < ni; ++i) {
            f(i) = std::sqrt(2.0) * rms * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n));
        }
        return f;
    }
    if (kind == "smooth-decay") {
        const double rms = c.nonneg("rms", 1.0);
        const double decay = c.positive("decay", 1.5);
        for (Eigen::Index i = 0; i < ni; ++i) {
            double v = 0.0;
            for (std::size_t l = 1; l <= n; ++l) {
                v += std::pow(static_cast<double>(l), -decay) *
                     std::cos(std::numbers::pi * static_cast<double>(l) * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
            }
            f(i) = v;
        }
        const double cur = std::sqrt(f.squaredNorm() / static_cast<double>(n));
        if (cur > 0.0) f *= rms / cur;
        return f;
    }
    if (kind == "linear") {
        if (!design) throw ConfigError(c.field("kind") + ": 'linear' truth needs a design");
        const auto p = static_cast<std::size_t>(design->cols());
        std::vector<double> def(p, 0.0);
        def[0] = 1.5;
        if (p > 1) def[1] = -1.0;
        const auto beta = c.numbers("beta", def);
        if (beta.size() != p) throw ConfigError(c.field("beta") + " must have p = " + std::to_string(p) + " entries");
        return *design * Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(p));
    }
    if (kind == "file") {
        const auto path = c.file("path");
        Vector v = config_guard(c.field("path"), [&] { return read_vector_csv(path); });
        if (static_cast<std::size_t>(v.size()) != n) {
            throw ConfigError(c.field("path") + ": vector has " + std::to_string(v.size()) + " entries, n = " +
                              std::to_string(n));
        }
        return v;
    }
    throw ConfigError(c.field("kind") + ": unknown truth kind '" + kind +
                      "' (zero, spike, cosine, smooth-decay, linear, file)");
}

NoiseModel build_noise(Cfg c) {
    NoiseModel m;
    const std::string kind = c.str("kind", "gaussian");
    m.kind = config_guard(c.field("kind"), [&] { return noise_kind_from_string(kind); });
    m.sigma = c.positive("sigma", 1.0);
    if (c.has("subgaussian_bound")) m.subgaussian_bound = c.positive("subgaussian_bound", m.sigma);
    return m;
}

std::vector<std::size_t> first_columns(std::size_t j) {
    std::vector<std::size_t> cols(j);
    for (std::size_t c = 0; c < j; ++c) cols[c] = c;
    return cols;
}

std::shared_ptr<const std::vector<AffineEstimator>> build_bank(Cfg c, std::size_t n, const std::string& def_kind) {
    const std::string kind = c.str("kind", def_kind);
    auto out = std::make_shared<std::vector<AffineEstimator>>();
    if (kind == "scaled_identity") {
        std::vector<double> lambdas;
        if (c.has("lambdas")) {
            lambdas = c.numbers("lambdas", {});
        } else {
            const std::size_t M = c.count("M", 20);
            const double lo = c.number("lo", 0.05);
            const double hi = c.number("hi", 1.0);
            for (std::size_t j = 0; j < M; ++j) {
                lambdas.push_back(M == 1 ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(M - 1));
            }
        }
        for (double l : lambdas) out->push_back(AffineEstimator::scaled_identity(n, l));
    } else if (kind == "smoothness_filters") {
        const auto grid = config_guard(c.where(), [&] { return smoothness_grid(n); });
        *out = filter_bank(grid);
    } else if (kind == "nested_projectors") {
        const Matrix x = build_design(c.child("design"), n);
        for (std::size_t j = 1; j <= static_cast<std::size_t>(x.cols()); ++j) {
            out->push_back(make_projection(x, first_columns(j)).estimator);
        }
    } else if (kind == "projectors") {
        const Matrix x = build_design(c.child("design"), n);
        if (!c.has("supports") || !c.raw("supports").is_array()) {
            throw ConfigError(c.field("supports") + " must be an array of column index arrays");
        }
        const json supports = c.raw("supports");
        for (std::size_t i = 0; i < supports.size(); ++i) {
            std::vector<std::size_t> cols;
            for (const auto& e : supports[i]) {
                if (!e.is_number_integer() || e.get<long long>() < 0 || e.get<std::size_t>() >= static_cast<std::size_t>(x.cols())) {
                    throw ConfigError(c.field("supports") + "[" + std::to_string(i) + "] has an invalid column index");
                }
                cols.push_back(e.get<std::size_t>());
            }
            out->push_back(make_projection(x, cols).estimator);
        }
    } else if (kind == "diagonal") {
        const auto path = c.file("weights");
        const Matrix w = config_guard(c.field("weights"), [&] { return read_matrix_csv(path); });
        if (static_cast<std::size_t>(w.cols()) != n) {
            throw ConfigError(c.field("weights") + ": each row must have n = " + std::to_string(n) + " entries");
        }
        for (Eigen::Index j = 0; j < w.rows(); ++j) out->push_back(AffineEstimator::diagonal(w.row(j).transpose()));
    } else if (kind == "dense") {
        if (!c.has("matrices") || !c.raw("matrices").is_array()) {
            throw ConfigError(c.field("matrices") + " must be an array of CSV paths");
        }
        const json files = c.raw("matrices");
        const json offsets = c.has("offsets") ? c.raw("offsets") : json::array();
        if (!offsets.is_array() || (!offsets.empty() && offsets.size() != files.size())) {
            throw ConfigError(c.field("offsets") + " must list one CSV path per matrix");
        }
        for (std::size_t i = 0; i < files.size(); ++i) {
            const std::string fld = c.field("matrices") + "[" + std::to_string(i) + "]";
            if (!files[i].is_string() || !std::filesystem::exists(files[i].get<std::string>())) {
                throw ConfigError(fld + ": missing file");
            }
            Matrix a = config_guard(fld, [&] { return read_matrix_csv(files[i].get<std::string>()); });
            if (static_cast<std::size_t>(a.rows()) != n || static_cast<std::size_t>(a.cols()) != n) {
                throw ConfigError(fld + ": matrix must be n x n with n = " + std::to_string(n));
            }
            Vector b;
            if (!offsets.empty()) {
                const std::string ofld = c.field("offsets") + "[" + std::to_string(i) + "]";
                if (!offsets[i].is_string() || !std::filesystem::exists(offsets[i].get<std::string>())) {
                    throw ConfigError(ofld + ": missing file");
                }
                b = config_guard(ofld, [&] { return read_vector_csv(offsets[i].get<std::string>()); });
            }
            out->push_back(config_guard(fld, [&] { return AffineEstimator::dense(std::move(a), std::move(b)); }));
        }
    } else {
        throw ConfigError(c.field("kind") + ": unknown bank kind '" + kind +
                          "' (scaled_identity, smoothness_filters, nested_projectors, projectors, diagonal, dense)");
    }
    if (out->empty()) throw ConfigError(c.where() + ": bank is empty");
    return out;
}

std::optional<Prior> build_prior(Cfg c, std::size_t M) {
    const std::string kind = c.str("kind", "uniform");
    if (kind == "uniform") return Prior::uniform(M);
    if (kind == "weights") {
        auto w = c.numbers("weights", {});
        if (w.size() != M) throw ConfigError(c.field("weights") + " must have M = " + std::to_string(M) + " entries");
        Vector v = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(M));
        if ((v.array() <= 0.0).any()) throw ConfigError(c.field("weights") + " must be positive");
        v /= v.sum();
        return Prior(std::move(v));
    }
    throw ConfigError(c.field("kind") + ": unknown prior kind '" + kind + "' (uniform, weights)");
}

// ---------------------------------------------------------------------------

struct Context {
    Cfg cfg;
    std::uint64_t seed;
    std::size_t threads;
    std::filesystem::path out_dir;
    RunResult& result;

    void check(const std::string& name, bool pass, const std::string& detail) {
        result.checks.push_back({name, pass, detail});
    }
    std::ofstream open(const std::string& name) {
        const auto path = out_dir / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
        result.outputs.push_back(name);
        return os;
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string tail_detail(const TailCheckReport& r) {
    std::ostringstream os;
    for (std::size_t i = 0; i < r.x_levels.size(); ++i) {
        if (i) os << "; ";
        os << "x=" << fmt(r.x_levels[i]) << " exceed " << r.exceed_count[i] << "/" << r.trials << ", wilson "
           << fmt(r.wilson_upper[i]) << (r.pass[i] ? " <= " : " > ") << fmt(r.theoretical[i]);
    }
    return os.str();
}

const std::vector<std::string> kProcedures{"q_aggregate",     "q_aggregate_prior", "q_aggregate_plugin_variance",
                                           "q_aggregate_subgaussian", "cp_minimize",  "erm_cp", "convex"};

struct Problem {
    std::size_t n = 0;
    std::shared_ptr<const std::vector<AffineEstimator>> family;
    Vector f;
    NoiseModel noise;
};

Problem build_problem(Context& ctx, const std::string& def_bank) {
    Problem p;
    p.n = ctx.cfg.count("n", 200);
    Cfg bank = ctx.cfg.child("bank");
    if (ctx.cfg.has("M") && !bank.has("M") && !bank.has("lambdas")) bank.set_default("M", ctx.cfg.raw("M"));
    p.family = build_bank(bank, p.n, def_bank);
    if (ctx.cfg.has("M") && ctx.cfg.count("M", 1) != p.family->size()) {
        throw ConfigError("M = " + std::to_string(ctx.cfg.count("M", 1)) + " but the bank has " +
                          std::to_string(p.family->size()) + " estimators");
    }
    std::optional<Matrix> design;
    p.f = build_truth(ctx.cfg.child("f"), p.n, design);
    p.noise = build_noise(ctx.cfg.child("noise"));
    return p;
}

// Fills a TrialSetup from the procedure/variance/prior sections.
TrialSetup build_setup(Context& ctx, const Problem& p, std::size_t trials) {
    TrialSetup s;
    s.family = p.family;
    s.f = p.f;
    s.noise = p.noise;
    s.trials = trials;
    s.base_seed = ctx.seed;
    s.threads = ctx.threads;

    const std::string proc = ctx.cfg.str("procedure", "q_aggregate");
    if (std::find(kProcedures.begin(), kProcedures.end(), proc) == kProcedures.end()) {
        std::string all;
        for (const auto& n : kProcedures) all += (all.empty() ? "" : ", ") + n;
        throw ConfigError("procedure: unknown '" + proc + "' (" + all + ")");
    }
    Cfg var = ctx.cfg.child("variance");
    const double sigma2 = p.noise.sigma * p.noise.sigma;
    const std::string policy = var.str("policy", proc == "q_aggregate_plugin_variance" ? "plugin" : "known");
    s.variance_policy = config_guard("variance.policy", [&] { return variance_policy_from_string(policy); });
    s.sigma2 = s.variance_policy == VariancePolicy::plugin ? var.nonneg("value", sigma2) : sigma2;

    if (proc == "q_aggregate" || proc == "q_aggregate_subgaussian") s.objective = ObjectiveKind::h_pen;
    if (proc == "q_aggregate_plugin_variance") s.objective = ObjectiveKind::w_pen;
    if (proc == "cp_minimize") s.objective = ObjectiveKind::cp;
    if (proc == "erm_cp") s.select_vertex = true;
    if (proc == "q_aggregate_prior") {
        s.objective = ObjectiveKind::v_pen;
        s.prior = build_prior(ctx.cfg.child("prior"), p.family->size());
    }
    if (proc == "convex") {
        Cfg conv = ctx.cfg.child("convex");
        const std::size_t M = p.family->size();
        const std::size_t m = conv.count("m", M == 1 ? 1 : config_guard("convex", [&] { return maurey_m(M, p.n); }));
        const std::size_t cap = conv.count("bank_cap", kDefaultGridBankCap);
        const std::size_t count = maurey_grid_count(M, m);
        if (count > cap) throw ConfigError("convex.m: grid of " + std::to_string(count) + " points exceeds convex.bank_cap");
        s.mixing = config_guard("convex", [&] { return maurey_grid(M, m).points; });
    }
    return s;
}

// ---------------------------------------------------------------------------
// Experiments

void exp_aggregate(Context& ctx) {
    const Problem p = build_problem(ctx, "scaled_identity");
    Vector y;
    if (ctx.cfg.has("y")) {
        const auto path = ctx.cfg.file("y");
        y = config_guard("y", [&] { return read_vector_csv(path); });
        if (static_cast<std::size_t>(y.size()) != p.n) throw ConfigError("y: expected n = " + std::to_string(p.n) + " entries");
    } else {
        y = p.f + gen_noise(p.noise, p.n, ctx.seed);
    }
    const TrialSetup s = build_setup(ctx, p, 0);
    const EstimatorBank bank(p.family, y);
    const std::string proc = ctx.cfg.str("procedure", "q_aggregate");
    json out;
    bool converged = true;
    if (s.select_vertex) {
        const std::size_t j = erm_cp_select(bank, s.variance_policy == VariancePolicy::difference ? difference_variance(y) : s.sigma2);
        out = {{"procedure", proc}, {"selected", j}};
        const Vector fit = bank.fit(j);
        out["fitted"] = std::vector<double>(fit.begin(), fit.end());
    } else {
        const double var = s.variance_policy == VariancePolicy::difference ? difference_variance(y) : s.sigma2;
        AggregateOutput agg = [&] {
            if (proc == "convex") {
                ConvexOptions opts;
                opts.m = ctx.cfg.child("convex").count("m", 1);
                ConvexAggregateOutput c = convex_aggregate(bank, var, opts);
                AggregateOutput a = c.grid_output;
                a.theta = c.theta;
                return a;
            }
            if (proc == "q_aggregate_prior") return q_aggregate_prior(bank, var, *s.prior);
            if (proc == "q_aggregate_plugin_variance") return q_aggregate_plugin_variance(bank, var);
            if (proc == "cp_minimize") return cp_minimize(bank, var);
            return q_aggregate(bank, var);
        }();
        converged = agg.solve.converged;
        out = to_json(agg);
        out["procedure"] = proc;
        out["variance_used"] = var;
    }
    out["risk"] = nullptr;
    if (!ctx.cfg.has("y")) {
        const std::vector<double> fitted = out["fitted"].get<std::vector<double>>();
        out["risk"] = (Eigen::Map<const Vector>(fitted.data(), static_cast<Eigen::Index>(fitted.size())) - p.f).squaredNorm();
    }
    ctx.open("aggregate.json") << out.dump(2) << "\n";
    ctx.check("solver converged", converged, converged ? "KKT residual within tolerance" : "solver hit its iteration cap");
}

void write_trials(Context& ctx, const std::vector<TrialRecord>& records) {
    auto os = ctx.open("trials.csv");
    write_records_csv(os, records);
}

void role_checks(Context& ctx, const std::vector<TrialRecord>& records) {
    std::size_t errors = 0;
    std::size_t violations = 0;
    std::size_t unconverged = 0;
    for (const auto& r : records) {
        if (!r.ok()) ++errors;
        else if (!r.role_holds()) ++violations;
        if (r.ok() && !r.converged) ++unconverged;
    }
    ctx.check("trials completed", errors == 0, std::to_string(errors) + " of " + std::to_string(records.size()) + " trials failed");
    ctx.check("deterministic oracle inequality", violations == 0,
              std::to_string(violations) + " of " + std::to_string(records.size()) + " trials violate it beyond 10 tol");
    ctx.check("solver converged", unconverged == 0, std::to_string(unconverged) + " trials stopped at the iteration cap");
}

void summary(RunResult& result, const std::vector<TrialRecord>& records) {
    std::vector<double> ex;
    for (const auto& r : records) {
        if (r.ok()) ex.push_back(r.excess_risk);
    }
    if (ex.size() >= 2) {
        const MeanSummary m = mean_summary(ex);
        result.report["summary"] = {{"trials", records.size()}, {"mean_excess", m.mean}, {"std_error", m.std_error},
                                    {"median_excess", median(ex)}};
    }
}

void exp_simulate(Context& ctx) {
    const Problem p = build_problem(ctx, "scaled_identity");
    const std::size_t trials = ctx.cfg.count("trials", 1000);
    const TrialSetup s = build_setup(ctx, p, trials);
    const auto records = run_trials(s);
    write_trials(ctx, records);
    role_checks(ctx, records);
    summary(ctx.result, records);
}

void exp_tail(Context& ctx, const std::string& def_bank, const std::string& def_bound) {
    const Problem p = build_problem(ctx, def_bank);
    const std::size_t trials = ctx.cfg.count("trials", 5000, kMinTailRecords);
    const TrialSetup s = build_setup(ctx, p, trials);
    const auto xs = ctx.cfg.numbers("x_levels", {1.0, 2.0, 3.0});
    for (double x : xs) {
        if (!(x > 0.0)) throw ConfigError("x_levels must be positive");
    }
    const std::string proc = ctx.cfg.str("procedure", "q_aggregate");
    std::string bound_default = def_bound;
    if (bound_default.empty()) {
        bound_default = proc == "q_aggregate_plugin_variance" ? "plugin"
                        : proc == "q_aggregate_prior"        ? "prior"
                        : proc == "q_aggregate_subgaussian"  ? "subgaussian"
                                                             : "gaussian";
    }
    const std::string bound = ctx.cfg.str("bound", bound_default);
    const std::size_t M = p.family->size();
    const double sigma2 = p.noise.sigma * p.noise.sigma;
    const double bar2 = p.noise.bar() * p.noise.bar();

    const auto records = run_trials(s);
    write_trials(ctx, records);
    role_checks(ctx, records);
    summary(ctx.result, records);

    std::vector<double> values;
    for (const auto& r : records) {
        double v = r.excess_risk;
        if (bound == "prior") v = r.risk - r.prior_oracle;
        values.push_back(r.ok() ? v : std::numeric_limits<double>::quiet_NaN());
    }
    std::function<double(double)> fn;
    if (bound == "gaussian") fn = [&](double x) { return bounds::gaussian_excess(sigma2, M, x); };
    else if (bound == "plugin") fn = [&](double x) { return bounds::plugin_excess(sigma2, M, x); };
    else if (bound == "subgaussian") fn = [&](double x) { return bounds::subgaussian_excess(bar2, M, x); };
    else if (bound == "prior") fn = [&](double x) { return 46.0 * sigma2 * x; };
    else throw ConfigError("bound: unknown '" + bound + "' (gaussian, plugin, subgaussian, prior)");

    const TailCheckReport tail = tail_check(values, fn, xs, [](double x) { return 2.0 * std::exp(-x); });
    {
        auto os = ctx.open("tail.csv");
        write_tail_report_csv(os, tail);
    }
    ctx.result.report["tail"] = to_json(tail);
    ctx.check("tail bound (" + bound + ")", tail.all_pass(), tail_detail(tail));
    if (s.variance_policy == VariancePolicy::plugin) {
        // Sufficient condition of the plug-in bound; reported, not enforced.
        ctx.result.report["variance_condition"] = {{"sigma2", sigma2},
                                                   {"sigma2_hat", s.sigma2},
                                                   {"within_one_eighth", std::abs(s.sigma2 - sigma2) <= sigma2 / 8.0}};
    }
}

void exp_adapt(Context& ctx) {
    ctx.cfg.set_default("n", 100);
    ctx.cfg.set_default("procedure", "q_aggregate_plugin_variance");
    Cfg bank = ctx.cfg.child("bank");
    bank.set_default("kind", "nested_projectors");
    Cfg design = bank.child("design");
    design.set_default("p", 10);
    ctx.cfg.set_default("x_levels", std::vector<double>{1.0, 2.0});
    ctx.cfg.set_default("trials", 3000);
    const double sigma = ctx.cfg.child("noise").positive("sigma", 1.0);
    Cfg var = ctx.cfg.child("variance");
    var.set_default("policy", "plugin");
    var.set_default("value", 1.1 * sigma * sigma);
    exp_tail(ctx, "nested_projectors", "plugin");
}

void exp_identity(Context& ctx) {
    const std::size_t instances = ctx.cfg.count("instances", 1000);
    const std::size_t n_max = ctx.cfg.count("n_max", 50, 2);
    const std::size_t m_max = ctx.cfg.count("m_max", 10, 2);
    const double tol = ctx.cfg.positive("tol", 1e-9);
    const std::size_t trials = ctx.cfg.count("trials", 20000, 2);
    const double z_max = ctx.cfg.positive("z_max", 4.0);
    const std::size_t n = ctx.cfg.count("n", 30);

    const IdentitySuiteReport suite = identity_suite(instances, ctx.seed, n_max, m_max);
    ctx.check("algebraic identities", suite.max() <= tol,
              "max relative residual " + fmt(suite.max()) + " (tol " + fmt(tol) + ")");

    Rng rng(ctx.seed + 1);
    auto admissible = [&] {
        Matrix a = rng.normal_matrix(n, n);
        a *= 0.9 / dense_operator_norm(a);
        return AffineEstimator::dense(std::move(a), rng.normal_vector(n));
    };
    const AffineEstimator aj = admissible();
    const AffineEstimator ak = admissible();
    const Vector f = rng.normal_vector(n);
    const NoiseModel noise = build_noise(ctx.cfg.child("noise"));
    const IdentityCheckReport id = expectation_identity_check(aj, ak, f, noise, trials, ctx.seed + 2, ctx.threads);
    ctx.check("expected squared difference", std::abs(id.z_score) <= z_max,
              "mc " + fmt(id.mc_mean) + " vs closed form " + fmt(id.closed_form) + ", z = " + fmt(id.z_score));

    std::vector<AffineEstimator> family;
    for (std::size_t j = 0; j < 5; ++j) family.push_back(admissible());
    const EstimatorBank bank(std::move(family), f + gen_noise(noise, n, ctx.seed + 3));
    const double s2 = noise.sigma * noise.sigma;
    const Prior prior = Prior::uniform(bank.size());
    double probe = 0.0;
    for (const ObjectiveSpec& spec : {ObjectiveSpec::cp(s2), ObjectiveSpec::h_pen(s2), ObjectiveSpec::v_pen(s2, prior),
                                      ObjectiveSpec::w_pen(s2), ObjectiveSpec::u(s2, prior)}) {
        probe = std::max(probe, strong_convexity_probe(spec, bank, 1000, ctx.seed + 4));
    }
    ctx.check("second-order expansion of the criteria", probe <= tol,
              "max relative residual " + fmt(probe) + " over 1000 random pairs per criterion");

    auto os = ctx.open("identity.csv");
    os << "quantity,value\n";
    os << "bv_decomposition," << format_double(suite.bv_decomposition) << "\n";
    os << "taylor," << format_double(suite.taylor) << "\n";
    os << "quadratic_linear," << format_double(suite.quadratic_linear) << "\n";
    os << "decomposition_qv," << format_double(suite.decomposition_qv) << "\n";
    os << "mc_mean," << format_double(id.mc_mean) << "\n";
    os << "closed_form," << format_double(id.closed_form) << "\n";
    os << "z_score," << format_double(id.z_score) << "\n";
    os << "second_order_probe," << format_double(probe) << "\n";
}

void exp_concentration(Context& ctx) {
    const std::size_t count = ctx.cfg.count("instances", 5);
    const std::size_t n = ctx.cfg.count("n", 20);
    const std::size_t trials = ctx.cfg.count("trials", 100000, kMinTailRecords);
    const auto xs = ctx.cfg.numbers("x_levels", {1.0, 2.0, 4.0});
    const NoiseModel noise = build_noise(ctx.cfg.child("noise"));
    const std::string def_form = noise.kind == NoiseKind::gaussian ? "gaussian" : "hanson";
    const ChaosForm form = config_guard("chaos_form", [&] { return chaos_form_from_string(ctx.cfg.str("chaos_form", def_form)); });
    Rng rng(ctx.seed);
    auto os = ctx.open("concentration.csv");
    os << "instance,statistic,x,bound,exceed_count,trials,wilson_upper,theoretical,pass\n";
    bool all = true;
    for (std::size_t i = 0; i < count; ++i) {
        const Matrix b = rng.normal_matrix(n, n);
        const Vector v = rng.normal_vector(n);
        const std::uint64_t base = ctx.seed + 2 * i * trials;
        const TailCheckReport c = chaos_tail_check(b, noise, trials, xs, base, form, ctx.threads);
        const TailCheckReport l = linear_tail_check(v, noise, trials, xs, base + trials, ctx.threads);
        for (const auto& [name, r] : {std::pair<const char*, const TailCheckReport*>{"chaos", &c}, {"linear", &l}}) {
            for (std::size_t k = 0; k < r->x_levels.size(); ++k) {
                os << i << ',' << name << ',' << format_double(r->x_levels[k]) << ',' << format_double(r->bounds[k]) << ','
                   << r->exceed_count[k] << ',' << r->trials << ',' << format_double(r->wilson_upper[k]) << ','
                   << format_double(r->theoretical[k]) << ',' << (r->pass[k] ? 1 : 0) << '\n';
            }
            all = all && r->all_pass();
        }
    }
    ctx.check("concentration tails", all, std::to_string(count) + " chaos and " + std::to_string(count) + " linear forms");
}

void exp_maurey(Context& ctx) {
    const std::size_t M = ctx.cfg.count("M", 4);
    if (M > 5) throw ConfigError("M: the exact gap needs M <= 5");
    const std::size_t instances = ctx.cfg.count("instances", 200);
    const auto ms = ctx.cfg.indices("m", {1, 2, 3});
    const double tol = ctx.cfg.positive("tol", 1e-8);
    for (std::size_t m : ms) {
        if (m == 0) throw ConfigError("m: grid resolutions must be >= 1");
    }
    Rng rng(ctx.seed);
    auto os = ctx.open("maurey.csv");
    os << "instance,m,gap,bound\n";
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const Matrix l = rng.normal_matrix(M, M);
        const Matrix sigma = l * l.transpose();
        const QPProblem q{2.0 * sigma, rng.normal_vector(M), 0.0};
        for (std::size_t m : ms) {
            const double gap = maurey_gap(q, maurey_grid(M, m));
            const double b = maurey_bound(q, m);
            if (gap > b + tol) ++bad;
            os << i << ',' << m << ',' << format_double(gap) << ',' << format_double(b) << '\n';
        }
    }
    ctx.check("grid gap within 4 max Sigma_jj / m", bad == 0,
              std::to_string(bad) + " of " + std::to_string(instances * ms.size()) + " cases exceed the bound");
}

void exp_convex(Context& ctx) {
    ctx.cfg.set_default("n", 60);
    ctx.cfg.set_default("procedure", "convex");
    Cfg bank = ctx.cfg.child("bank");
    bank.set_default("kind", "scaled_identity");
    bank.set_default("M", 3);
    const Problem p = build_problem(ctx, "scaled_identity");
    const std::size_t trials = ctx.cfg.count("trials", 200);
    if (ctx.cfg.str("procedure", "convex") != "convex") throw ConfigError("procedure must be 'convex' for this experiment");
    const TrialSetup s = build_setup(ctx, p, trials);
    const auto records = run_trials(s);
    role_checks(ctx, records);

    // Best convex combination of the original family on each trial.
    std::vector<double> best(records.size(), 0.0);
    std::vector<double> gap_bound(records.size(), 0.0);
    const std::size_t m = ctx.cfg.child("convex").count("m", 1);
    parallel_for(records.size(), ctx.threads, [&](std::size_t t) {
        const Vector y = p.f + gen_noise(p.noise, p.n, records[t].seed);
        const EstimatorBank b(p.family, y);
        QPProblem q{2.0 * b.gram(), -2.0 * (b.fits().transpose() * p.f), p.f.squaredNorm()};
        best[t] = solve_qp(q).objective;
        gap_bound[t] = maurey_bound(q, m);
    });
    auto os = ctx.open("convex.csv");
    os << "trial,seed,risk,best_convex_risk,best_grid_risk,maurey_bound,excess_over_convex,excess_over_grid\n";
    std::vector<double> excess;
    std::vector<double> grid_excess;
    std::size_t maurey_bad = 0;
    for (std::size_t t = 0; t < records.size(); ++t) {
        const auto& r = records[t];
        os << t << ',' << r.seed << ',' << format_double(r.risk) << ',' << format_double(best[t]) << ','
           << format_double(r.oracle_risk) << ',' << format_double(gap_bound[t]) << ',' << format_double(r.risk - best[t])
           << ',' << format_double(r.excess_risk) << '\n';
        if (!r.ok()) continue;
        excess.push_back(r.risk - best[t]);
        grid_excess.push_back(r.excess_risk);
        if (r.oracle_risk - best[t] > gap_bound[t] + 1e-8 * std::max(1.0, best[t])) ++maurey_bad;
    }
    ctx.check("best grid point within the Maurey bound", maurey_bad == 0,
              std::to_string(maurey_bad) + " of " + std::to_string(excess.size()) + " trials exceed it");
    if (excess.size() >= 2) {
        const MeanSummary me = mean_summary(excess);
        const MeanSummary mg = mean_summary(grid_excess);
        const std::size_t K = static_cast<std::size_t>(s.mixing->rows());
        const double sigma2 = p.noise.sigma * p.noise.sigma;
        const double bound = bounds::gaussian_expected_excess(sigma2, K);
        if (p.noise.kind == NoiseKind::gaussian && s.variance_policy == VariancePolicy::known) {
            ctx.check("expected excess over the grid", mg.upper <= bound,
                      "mean " + fmt(mg.mean) + " + z se = " + fmt(mg.upper) + " vs 92 sigma^2 log(e K) = " + fmt(bound));
        }
        ctx.result.report["summary"] = {{"trials", records.size()},
                                        {"grid_points", K},
                                        {"m", m},
                                        {"mean_excess_over_convex", me.mean},
                                        {"median_excess_over_convex", median(excess)},
                                        {"mean_excess_over_grid", mg.mean}};
    }
}

void exp_sparsity(Context& ctx) {
    const std::size_t n = ctx.cfg.count("n", 64);
    Cfg dcfg = ctx.cfg.child("design");
    const Matrix x = build_design(dcfg, n);
    const auto p = static_cast<std::size_t>(x.cols());
    if (p > 20) throw ConfigError("design: p = " + std::to_string(p) + " is above 20, the bound needs all 2^p supports");
    Cfg fcfg = ctx.cfg.child("f");
    fcfg.set_default("kind", "linear");
    const Vector f = build_truth(fcfg, n, x);
    const NoiseModel noise = build_noise(ctx.cfg.child("noise"));
    const double k2 = noise.bar() * noise.bar();
    const double khat2 = ctx.cfg.nonneg("khat2", k2);
    const std::size_t k_max = ctx.cfg.count("k_max", std::min<std::size_t>(p, 3));
    const std::size_t cap = ctx.cfg.count("support_cap", kDefaultSupportCap);
    const std::size_t trials = ctx.cfg.count("trials", 1000, kMinTailRecords);
    const auto xs = ctx.cfg.numbers("x_levels", {1.0, 2.0});
    const SparsitySpec spec = config_guard("sparsity", [&] { return make_sparsity_spec(x, k_max, khat2, cap); });

    TrialSetup s;
    s.family = spec.projectors;
    s.objective = ObjectiveKind::u;
    s.khat2 = khat2;
    s.prior = spec.prior;
    s.f = f;
    s.noise = noise;
    s.trials = trials;
    s.base_seed = ctx.seed;
    s.threads = ctx.threads;
    const auto records = run_trials(s);
    write_trials(ctx, records);
    role_checks(ctx, records);
    ctx.check("prior trace condition", spec.trace_violations.empty(),
              std::to_string(spec.trace_violations.size()) + " supports with Tr(A_J) > log(1/pi_J)");

    std::vector<double> risks;
    std::vector<double> extra;
    for (const auto& r : records) {
        risks.push_back(r.ok() ? r.risk : std::numeric_limits<double>::quiet_NaN());
        extra.push_back(r.ok() ? r.risk - r.prior_oracle : std::numeric_limits<double>::quiet_NaN());
    }
    // delta = P(khat^2 < K^2) is 0 or 1 for a fixed khat^2.
    const double delta = khat2 < k2 ? 1.0 : 0.0;
    const TailCheckReport sparse = tail_check(
        risks, [&](double xx) { return bounds::sparsity_rhs(x, f, k2, khat2, xx); }, xs,
        [&](double xx) { return std::min(1.0, 3.0 * std::exp(-xx) + delta); });
    const TailCheckReport prior = tail_check(
        extra, [&](double xx) { return bounds::prior_projector_deviation(k2, xx); }, xs,
        [&](double xx) { return std::min(1.0, 2.0 * std::exp(-xx) + delta); });
    {
        auto os = ctx.open("tail.csv");
        os << "# sparsity oracle inequality\n";
        write_tail_report_csv(os, sparse);
        os << "# prior-weighted projector inequality\n";
        write_tail_report_csv(os, prior);
    }
    ctx.result.report["tail"] = {{"sparsity", to_json(sparse)}, {"prior_weighted", to_json(prior)}};
    ctx.check("sparsity oracle inequality", sparse.all_pass(), tail_detail(sparse));
    ctx.check("prior-weighted projector inequality", prior.all_pass(), tail_detail(prior));
}

void exp_kregressor(Context& ctx) {
    const std::size_t n = ctx.cfg.count("n", 30);
    Cfg dcfg = ctx.cfg.child("design");
    dcfg.set_default("kind", "identity");
    const Matrix x = build_design(dcfg, n);
    const auto p = static_cast<std::size_t>(x.cols());
    const std::size_t k = ctx.cfg.count("k", 1);
    if (k > p) throw ConfigError("k must be <= p = " + std::to_string(p));
    Cfg fcfg = ctx.cfg.child("f");
    fcfg.set_default("kind", "spike");
    const Vector f = build_truth(fcfg, n, x);
    const NoiseModel noise = build_noise(ctx.cfg.child("noise"));
    const std::size_t trials = ctx.cfg.count("trials", 2000, kMinTailRecords);
    const auto xs = ctx.cfg.numbers("x_levels", {1.0, 2.0});
    const KRegressorFamily fam = config_guard("kregressor", [&] { return make_kregressor_family(x, k); });

    TrialSetup s;
    s.family = fam.projectors;
    s.objective = ObjectiveKind::h_pen;
    s.sigma2 = noise.sigma * noise.sigma;
    s.f = f;
    s.noise = noise;
    s.trials = trials;
    s.base_seed = ctx.seed;
    s.threads = ctx.threads;
    const auto records = run_trials(s);
    write_trials(ctx, records);
    role_checks(ctx, records);

    const double best = bounds::best_k_sparse_residual(x, f, k);
    std::vector<double> excess;
    for (const auto& r : records) excess.push_back(r.ok() ? r.risk - best : std::numeric_limits<double>::quiet_NaN());
    const double sigma2 = s.sigma2;
    const TailCheckReport tail = tail_check(
        excess, [&](double xx) { return bounds::kregressor_excess(sigma2, k, p, xx); }, xs,
        [](double xx) { return 3.0 * std::exp(-xx); });
    {
        auto os = ctx.open("tail.csv");
        write_tail_report_csv(os, tail);
    }
    ctx.result.report["tail"] = to_json(tail);
    ctx.check("k-regressor bound", tail.all_pass(), tail_detail(tail));
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

namespace {

void write_report(const RunOptions& options, const json& report) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (std::filesystem::is_directory(options.out_dir, ec)) {
        std::ofstream os(options.out_dir / "report.json");
        if (os) os << report.dump(2) << "\n";
    }
}

}  // namespace

RunResult config_failure(std::string_view kind, const std::string& message, const RunOptions& options) {
    RunResult result;
    result.exit_code = 2;
    result.report = {{"experiment", std::string(kind)}, {"version", std::string(kVersion)},
                     {"started_at", timestamp()},       {"config", nullptr},
                     {"checks", json::array()},         {"outputs", json::array()},
                     {"exit_code", 2},                  {"csv_schema_version", kCsvSchemaVersion},
                     {"error", message},                {"wall_seconds", 0.0}};
    write_report(options, result.report);
    return result;
}

RunResult run_experiment(std::string_view kind, json config, const RunOptions& options) {
    RunResult result;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string name(kind);
    result.report = {{"experiment", name}, {"version", std::string(kVersion)}, {"started_at", timestamp()}};

    std::string error;
    try {
        const bool known = std::any_of(experiments().begin(), experiments().end(),
                                       [&](const ExperimentInfo& e) { return e.name == name; });
        if (!known) throw ConfigError("unknown experiment '" + name + "' (see 'affagg list')");
        if (!config.is_object()) throw ConfigError("config must be a JSON object");

        std::error_code ec;
        std::filesystem::create_directories(options.out_dir, ec);
        if (ec) throw ConfigError("cannot create output directory '" + options.out_dir.string() + "': " + ec.message());

        Cfg cfg(config, "");
        std::uint64_t seed = cfg.seed("seed", 1);
        if (options.seed) {
            seed = *options.seed;
            config["seed"] = seed;
        }
        std::size_t threads = cfg.count("threads", 0, 0);
        if (options.threads) threads = *options.threads;
        config.erase("threads");

        Context ctx{cfg, seed, threads, options.out_dir, result};
        if (name == "aggregate") exp_aggregate(ctx);
        else if (name == "simulate") exp_simulate(ctx);
        else if (name == "tail-check") exp_tail(ctx, "scaled_identity", "");
        else if (name == "adapt") exp_adapt(ctx);
        else if (name == "identity-check") exp_identity(ctx);
        else if (name == "concentration") exp_concentration(ctx);
        else if (name == "maurey-check") exp_maurey(ctx);
        else if (name == "convex") exp_convex(ctx);
        else if (name == "sparsity") exp_sparsity(ctx);
        else if (name == "kregressor") exp_kregressor(ctx);
        result.exit_code = std::all_of(result.checks.begin(), result.checks.end(), [](const CheckResult& c) { return c.pass; })
                               ? 0
                               : 1;
    } catch (const ConfigError& e) {
        result.exit_code = 2;
        error = e.what();
    } catch (const std::exception& e) {
        result.exit_code = 1;
        error = e.what();
    }

    json checks = json::array();
    for (const auto& c : result.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    result.report["config"] = config;
    result.report["checks"] = checks;
    result.report["outputs"] = result.outputs;
    result.report["exit_code"] = result.exit_code;
    result.report["csv_schema_version"] = kCsvSchemaVersion;
    if (!error.empty()) result.report["error"] = error;
    result.report["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_report(options, result.report);
    return result;
}

}  // namespace affagg
