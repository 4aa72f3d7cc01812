#include "affagg/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace affagg {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::vector<double>> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            if (b == std::string::npos) {
                throw DomainError(path.string() + ":" + std::to_string(lineno) + ": empty cell");
            }
            const std::string tok = cell.substr(b, e - b + 1);
            double v = 0.0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
                throw DomainError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DomainError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DomainError("'" + path.string() + "' contains no data");
    return rows;
}

}  // namespace

Matrix read_matrix_csv(const std::filesystem::path& path) {
    const auto rows = read_rows(path);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

Vector read_vector_csv(const std::filesystem::path& path) {
    const Matrix m = read_matrix_csv(path);
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0).transpose();
    throw DomainError("'" + path.string() + "' is not a vector (" + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ")");
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << format_double(m(i, j));
        }
        os << '\n';
    }
}

void write_records_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
    os << "trial,seed,risk,oracle_risk,excess_risk,oracle_index,prior_oracle,role_lhs,role_rhs,role_slack,tol,kkt_residual,"
          "iterations,converged,sigma2_used,error\n";
    for (std::size_t t = 0; t < records.size(); ++t) {
        const auto& r = records[t];
        std::string err = r.error;
        for (char& c : err) {
            if (c == ',' || c == '\n' || c == '"') c = ' ';
        }
        os << t << ',' << r.seed << ',' << format_double(r.risk) << ',' << format_double(r.oracle_risk) << ','
           << format_double(r.excess_risk) << ',' << r.oracle_index << ',' << format_double(r.prior_oracle) << ',' << format_double(r.role_lhs) << ','
           << format_double(r.role_rhs) << ',' << format_double(r.role_slack) << ',' << format_double(r.tol) << ','
           << format_double(r.kkt_residual) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
           << format_double(r.sigma2_used) << ',' << err << '\n';
    }
}

void write_tail_report_csv(std::ostream& os, const TailCheckReport& report) {
    os << "x,bound,exceed_count,trials,empirical_exceed,theoretical,wilson_upper,pass\n";
    for (std::size_t i = 0; i < report.x_levels.size(); ++i) {
        os << format_double(report.x_levels[i]) << ',' << format_double(report.bounds[i]) << ','
           << report.exceed_count[i] << ',' << report.trials << ',' << format_double(report.empirical_exceed[i]) << ','
           << format_double(report.theoretical[i]) << ',' << format_double(report.wilson_upper[i]) << ','
           << (report.pass[i] ? 1 : 0) << '\n';
    }
}

nlohmann::json to_json(const TailCheckReport& r) {
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t i = 0; i < r.x_levels.size(); ++i) {
        levels.push_back({{"x", r.x_levels[i]},
                          {"bound", r.bounds[i]},
                          {"exceed_count", r.exceed_count[i]},
                          {"empirical_exceed", r.empirical_exceed[i]},
                          {"theoretical", r.theoretical[i]},
                          {"wilson_upper", r.wilson_upper[i]},
                          {"pass", static_cast<bool>(r.pass[i])}});
    }
    return {{"trials", r.trials}, {"levels", levels}, {"pass", r.all_pass()}};
}

nlohmann::json to_json(const IdentityCheckReport& r) {
    return {{"trials", r.trials},
            {"mc_mean", r.mc_mean},
            {"closed_form", r.closed_form},
            {"std_error", r.std_error},
            {"z_score", r.z_score}};
}

nlohmann::json to_json(const IdentitySuiteReport& r) {
    return {{"instances", r.instances},
            {"bv_decomposition", r.bv_decomposition},
            {"taylor", r.taylor},
            {"quadratic_linear", r.quadratic_linear},
            {"decomposition_qv", r.decomposition_qv}};
}

nlohmann::json to_json(const AggregateOutput& o) {
    const Vector& w = o.theta.weights();
    return {{"objective", std::string(to_string(o.objective_kind))},
            {"theta", std::vector<double>(w.begin(), w.end())},
            {"fitted", std::vector<double>(o.fitted.begin(), o.fitted.end())},
            {"objective_value", o.solve.objective},
            {"kkt_residual", o.solve.kkt_residual},
            {"iterations", o.solve.iterations},
            {"converged", o.solve.converged},
            {"warnings", o.warnings}};
}

}  // namespace affagg
