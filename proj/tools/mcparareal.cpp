#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mcparareal/experiment.hpp"

namespace ex = mcparareal::experiment;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::size_t resolve_workers(std::size_t flag) {
    if (flag > 0) {
        return flag;
    }
    if (const char* env = std::getenv("MCPARAREAL_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
        }
        std::cerr << "warning: ignoring invalid MCPARAREAL_WORKERS=" << env << "\n";
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Micro-macro Parareal for McKean-Vlasov SDEs"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (TOML, or a meta.json)")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--workers", workers, "worker threads (default: MCPARAREAL_WORKERS or 1)");
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "override the master seed");
    };
    CLI::App* run = app.add_subcommand("run", "run micro-macro Parareal and write iterates, errors, histograms");
    CLI::App* sweep = app.add_subcommand("sweep-n", "weak scaling over sweep.N with T = N T0");
    CLI::App* bounds = app.add_subcommand("bounds", "convergence bounds for the perturbed OU problem");
    CLI::App* compare = app.add_subcommand("compare-moment", "moment models against a Monte Carlo reference");
    for (auto* cmd : {run, sweep, bounds, compare}) {
        add_common(cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        ex::ExperimentConfig cfg = ex::load_config(config_path);
        if (seed_given) {
            cfg.seed = seed;
        }
        const std::size_t w = resolve_workers(workers);
        ex::Artifacts artifacts;
        if (run->parsed()) {
            artifacts = ex::cmd_run(cfg, w);
        } else if (sweep->parsed()) {
            artifacts = ex::cmd_sweep_n(cfg, w);
        } else if (bounds->parsed()) {
            artifacts = ex::cmd_bounds(cfg);
        } else {
            artifacts = ex::cmd_compare_moment(cfg, w);
        }
        for (const auto& warning : artifacts.meta["warnings"]) {
            std::cerr << "warning: " << warning.get<std::string>() << "\n";
        }
        ex::write_artifacts(artifacts, out_dir);
    } catch (const mcparareal::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const mcparareal::PararealFailure& e) {
        std::cerr << "numerical failure (k=" << e.iteration() << ", n=" << e.slice() << "): " << e.what() << "\n";
        return kExitNumerical;
    } catch (const mcparareal::Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
