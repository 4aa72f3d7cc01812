#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "affagg/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Aggregation of affine estimators: experiments and checks"};
    app.set_version_flag("--version", std::string(affagg::kVersion));

    std::string experiment;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> trials;
    std::string out_dir = ".";

    app.add_option("experiment", experiment, "experiment kind, or 'list'")->required();
    app.add_option("-c,--config", config_path, "JSON config file");
    app.add_option("--set", overrides, "override a config value, key.path=value (repeatable)");
    app.add_option("--seed", seed, "base seed (overrides AFFAGG_SEED and the config)");
    app.add_option("--threads", threads, "worker threads, 0 = hardware concurrency");
    app.add_option("--trials", trials, "shorthand for --set trials=N");
    app.add_option("-o,--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (experiment == "list") {
        std::cout << affagg::list_experiments();
        return 0;
    }

    affagg::RunOptions options;
    options.out_dir = out_dir;
    options.threads = threads;
    options.seed = seed;

    nlohmann::json config = nlohmann::json::object();
    try {
        if (!config_path.empty()) config = affagg::load_config(config_path);
        for (const auto& o : overrides) affagg::apply_override(config, o);
        if (trials) config["trials"] = *trials;
        if (!seed) {
            if (const char* env = std::getenv("AFFAGG_SEED")) {
                std::size_t pos = 0;
                try {
                    options.seed = std::stoull(env, &pos);
                } catch (const std::exception&) {
                    pos = 0;
                }
                if (pos == 0 || pos != std::string(env).size() || env[0] == '-') {
                    throw affagg::ConfigError(std::string("AFFAGG_SEED='") + env + "' is not a non-negative integer");
                }
            }
        }
    } catch (const affagg::ConfigError& e) {
        std::cerr << "affagg: " << e.what() << "\n";
        return affagg::config_failure(experiment, e.what(), options).exit_code;
    }

    const affagg::RunResult r = affagg::run_experiment(experiment, std::move(config), options);
    for (const auto& c : r.checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    }
    if (r.report.contains("error")) std::cerr << "affagg: " << r.report["error"].get<std::string>() << "\n";
    for (const auto& o : r.outputs) std::cout << "wrote " << (std::filesystem::path(out_dir) / o).string() << "\n";
    return r.exit_code;
}
