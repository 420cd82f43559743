#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "clab/lab.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string stages;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::optional<double> a_sq_inv;
    std::optional<double> lambda_max;
};

std::vector<std::string> split_stages(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void print_summary(const clab::RunReport& rep, const clab::ExperimentConfig& cfg) {
    std::cout << "output: " << cfg.output_dir << "\n";
    for (const auto& p : rep.csv_paths) std::cout << "  " << p << "\n";
    for (const auto& w : rep.results.warnings) std::cout << "warning: " << w << "\n";
    if (rep.results.gap) {
        const auto& g = *rep.results.gap;
        std::cout << "gap demo: a^-2 = " << g.a_sq_inv << ", " << g.value_count << " distinct values up to "
                  << g.lambda_max << ", min gap " << g.min_gap;
        if (g.witness) std::cout << ", witness (" << g.witness->i << ", " << g.witness->j << ") gap " << g.witness->gap;
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency_lab: graph-to-manifold consistency experiments for spectral graph networks"};
    app.require_subcommand(1);
    app.footer(clab::config_schema());

    Options opt;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"spectra", "eigenvalue and eigenspace convergence along the ladder"},
        {"ops-check", "identities and bounds of the discretization and extension operators"},
        {"response-conv", "convergence of neural responses along the ladder"},
        {"train-ladder", "regularized ERM on shared dictionaries along the ladder"},
        {"gap-demo", "spectral gaps of S^2 x aS^2"},
        {"all", "every stage listed in the config (default: all)"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory (overrides the config)");
        sub->add_option("--seed", opt.seed, "master seed (default 0)");
        sub->add_option("--stages", opt.stages, "comma-separated stage list (overrides the subcommand)");
        sub->add_option("--threads", opt.threads, "worker threads (default: CONSISTENCY_LAB_THREADS or 1)")
            ->check(CLI::Range(1, 1024));
        if (name == "gap-demo" || name == "all") {
            sub->add_option("--a-sq-inv", opt.a_sq_inv, "a^-2 for the product sphere")->check(CLI::PositiveNumber);
            sub->add_option("--lambda-max", opt.lambda_max, "spectrum cutoff")->check(CLI::PositiveNumber);
        }
        sub->footer(clab::config_schema());
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    clab::ExperimentConfig cfg;
    try {
        if (!opt.config.empty()) cfg = clab::load_config(opt.config);
        if (!opt.out.empty()) cfg.output_dir = opt.out;
        if (opt.seed) cfg.master_seed = *opt.seed;
        if (opt.a_sq_inv) cfg.gap.a_sq_inv = *opt.a_sq_inv;
        if (opt.lambda_max) cfg.gap.lambda_max = *opt.lambda_max;
        if (!opt.stages.empty()) {
            nlohmann::json j = clab::config_to_json(cfg);
            j["stages"] = split_stages(opt.stages);
            cfg = clab::parse_config(j);
        } else if (command != "all") {
            cfg.stages = {command};
        }
    } catch (const clab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    const int threads = opt.threads > 0 ? opt.threads : clab::default_threads();
    clab::RunReport rep;
    try {
        rep = clab::run(cfg, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    print_summary(rep, cfg);
    if (!rep.ok()) {
        std::cerr << "stage '" << rep.failed_stage << "' failed: " << rep.error << "\n";
        return 1;
    }
    return 0;
}
