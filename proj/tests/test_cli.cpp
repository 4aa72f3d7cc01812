#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "affagg/experiment.hpp"
#include "affagg/io.hpp"

using namespace affagg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("affagg_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

RunResult run(const std::string& kind, nlohmann::json cfg, const fs::path& out, std::optional<std::size_t> threads = {}) {
    RunOptions o;
    o.out_dir = out;
    o.threads = threads;
    return run_experiment(kind, std::move(cfg), o);
}

}  // namespace

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-320}) {
        const std::string s = format_double(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("matrix csv") {
    const fs::path dir = scratch("csv");
    write(dir / "m.csv", "1,2,3\n4,5,6\n");
    const Matrix m = read_matrix_csv(dir / "m.csv");
    CHECK(m.rows() == 2);
    CHECK(m(1, 2) == 6.0);
    std::ostringstream os;
    write_matrix_csv(os, m);
    write(dir / "m2.csv", os.str());
    CHECK(read_matrix_csv(dir / "m2.csv") == m);

    write(dir / "ragged.csv", "1,2\n3\n");
    try {
        read_matrix_csv(dir / "ragged.csv");
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    write(dir / "junk.csv", "1,x\n");
    CHECK_THROWS(read_matrix_csv(dir / "junk.csv"));

    write(dir / "col.csv", "1\n2\n3\n");
    write(dir / "row.csv", "1,2,3\n");
    CHECK(read_vector_csv(dir / "col.csv") == read_vector_csv(dir / "row.csv"));
}

TEST_CASE("records csv header") {
    std::ostringstream os;
    write_records_csv(os, {});
    CHECK(os.str().rfind("trial,seed,risk,oracle_risk,excess_risk", 0) == 0);
}

TEST_CASE("list_experiments") {
    const std::string text = list_experiments();
    CHECK_FALSE(text.empty());
    CHECK(text.find("adapt") != std::string::npos);
    CHECK(text == list_experiments());
    CHECK(experiments().front().name == "aggregate");
    for (const auto& e : experiments()) CHECK_FALSE(e.verifies.empty());
}

TEST_CASE("overrides") {
    nlohmann::json c = {{"noise", {{"sigma", 1.0}}}, {"x_levels", {1, 2}}};
    apply_override(c, "noise.sigma=0.5");
    CHECK(c["noise"]["sigma"] == 0.5);
    apply_override(c, "noise.kind=rademacher");
    CHECK(c["noise"]["kind"] == "rademacher");
    apply_override(c, "bank.M=3");
    CHECK(c["bank"]["M"] == 3);
    apply_override(c, "x_levels.1=4");
    CHECK(c["x_levels"][1] == 4);
    CHECK_THROWS_AS(apply_override(c, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "a..b=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "noise.sigma.x=1"), ConfigError);
}

TEST_CASE("config parse errors give line and column") {
    const fs::path dir = scratch("parse");
    write(dir / "bad.json", "{\n  \"n\": 10,\n  \"trials\": ,\n}\n");
    try {
        load_config(dir / "bad.json");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bad.json:3:") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    const RunResult zero = run("simulate", {{"trials", 0}}, dir / "zero");
    CHECK(zero.exit_code == 2);
    CHECK(fs::exists(dir / "zero" / "report.json"));
    const auto rep = nlohmann::json::parse(slurp(dir / "zero" / "report.json"));
    CHECK(rep["error"].get<std::string>().find("trials") != std::string::npos);

    CHECK(run("bogus", nlohmann::json::object(), dir / "bogus").exit_code == 2);
    CHECK(run("simulate", {{"noise", {{"sigma", -1}}}}, dir / "sig").exit_code == 2);
    CHECK(run("simulate", {{"f", {{"kind", "file"}, {"path", "/nonexistent.csv"}}}}, dir / "file").exit_code == 2);
    CHECK(run("simulate", {{"procedure", "nope"}}, dir / "proc").exit_code == 2);

    // A threshold no Monte Carlo estimate meets: the check fails and is named.
    const RunResult fail = run("identity-check", {{"instances", 10}, {"trials", 1000}, {"z_max", 1e-12}}, dir / "strict");
    CHECK(fail.exit_code == 1);
    bool named = false;
    for (const auto& c : fail.checks) named = named || (!c.pass && c.name == "expected squared difference");
    CHECK(named);
}

TEST_CASE("identity-check exits 0") {
    const fs::path dir = scratch("identity");
    const RunResult r = run("identity-check", {{"instances", 100}, {"trials", 5000}, {"seed", 123}}, dir);
    CHECK(r.exit_code == 0);
    bool probe = false;
    for (const auto& c : r.checks) probe = probe || c.name.find("second-order") != std::string::npos;
    CHECK(probe);
    CHECK(fs::exists(dir / "identity.csv"));
}

TEST_CASE("tail-check writes the tail report and resolved defaults") {
    const fs::path dir = scratch("tail");
    const RunResult r = run("tail-check", {{"trials", 300}, {"seed", 9}}, dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "tail.csv"));
    CHECK(fs::exists(dir / "trials.csv"));
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["config"]["n"] == 200);
    CHECK(rep["config"]["bank"]["kind"] == "scaled_identity");
    CHECK(rep["version"] == std::string(kVersion));
    CHECK(rep["outputs"].size() == 2);
    CHECK(slurp(dir / "tail.csv").find("x,") != std::string::npos);
}

TEST_CASE("outputs do not depend on the thread count") {
    const fs::path dir = scratch("repro");
    const nlohmann::json cfg = {{"trials", 120}, {"seed", 4}, {"noise", {{"kind", "uniform"}}}};
    REQUIRE(run("simulate", cfg, dir / "a", 1).exit_code == 0);
    REQUIRE(run("simulate", cfg, dir / "b", 3).exit_code == 0);
    CHECK(slurp(dir / "a" / "trials.csv") == slurp(dir / "b" / "trials.csv"));
    REQUIRE(run("sparsity", {{"trials", 100}, {"seed", 4}}, dir / "c", 1).exit_code == 0);
    REQUIRE(run("sparsity", {{"trials", 100}, {"seed", 4}}, dir / "d", 2).exit_code == 0);
    CHECK(slurp(dir / "c" / "tail.csv") == slurp(dir / "d" / "tail.csv"));
}

TEST_CASE("every experiment runs on a small config") {
    const fs::path dir = scratch("all");
    const std::vector<std::pair<std::string, nlohmann::json>> runs{
        {"aggregate", {{"procedure", "q_aggregate_prior"}}},
        {"aggregate", {{"procedure", "erm_cp"}, {"bank", {{"kind", "smoothness_filters"}}}, {"n", 30}}},
        {"aggregate", {{"procedure", "convex"}, {"bank", {{"M", 3}}}, {"n", 40}}},
        {"simulate", {{"trials", 50}, {"procedure", "cp_minimize"}}},
        {"simulate", {{"trials", 50}, {"variance", {{"policy", "difference"}}}}},
        {"adapt", {{"trials", 200}}},
        {"concentration", {{"instances", 1}, {"trials", 10000}}},
        {"maurey-check", {{"instances", 20}}},
        {"convex", {{"trials", 50}}},
        {"kregressor", {{"trials", 150}, {"n", 12}}},
    };
    int i = 0;
    for (const auto& [kind, cfg] : runs) {
        CAPTURE(kind);
        const RunResult r = run(kind, cfg, dir / std::to_string(i++));
        CHECK(r.exit_code == 0);
        CHECK_FALSE(r.checks.empty());
    }
}

#ifdef AFFAGG_CLI_PATH
TEST_CASE("command line") {
    const fs::path dir = scratch("cli");
    const std::string exe = AFFAGG_CLI_PATH;
    auto code = [](const std::string& cmd) {
        const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    CHECK(code(exe + " list") == 0);
    CHECK(code(exe + " simulate --trials 0 --out " + (dir / "a").string()) == 2);
    CHECK(code(exe + " simulate --trials 30 --seed 5 --set noise.sigma=0.5 --out " + (dir / "b").string()) == 0);
    CHECK(code("AFFAGG_SEED=5 " + exe + " simulate --trials 30 --set noise.sigma=0.5 --out " + (dir / "c").string()) == 0);
    CHECK(slurp(dir / "b" / "trials.csv") == slurp(dir / "c" / "trials.csv"));
    CHECK(code("AFFAGG_SEED=abc " + exe + " simulate --out " + (dir / "d").string()) == 2);
    write(dir / "cfg.json", "{\"trials\": 30, \"seed\": 5, \"noise\": {\"sigma\": 0.5}}");
    CHECK(code(exe + " simulate --config " + (dir / "cfg.json").string() + " --out " + (dir / "e").string()) == 0);
    CHECK(slurp(dir / "b" / "trials.csv") == slurp(dir / "e" / "trials.csv"));
    CHECK(code(exe + " simulate --bogus-flag") == 2);
}
#endif
