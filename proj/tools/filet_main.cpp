#include "filet/config.hpp"
#include "filet/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace {

std::vector<std::pair<std::string, std::string>> parse_tasks(
    const std::vector<std::string>& args) {
    std::vector<std::pair<std::string, std::string>> tasks;
    for (const std::string& arg : args) {
        const size_t eq = arg.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
            throw std::invalid_argument("overlap: expected name=path, got '" + arg + "'");
        }
        tasks.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
    }
    return tasks;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fisher-guided low-rank adapter initialization workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed_override = 0;
    app.add_option("--config", config_path, "key = value configuration file");
    CLI::Option* seed_opt = app.add_option("--seed", seed_override, "overrides the config seed");
    app.add_option("--out", out_dir, "output directory (created if missing)");

    CLI::App* cmd_stats = app.add_subcommand("stats", "accumulate Kronecker Fisher factors");
    CLI::App* cmd_init = app.add_subcommand("init", "build adapter initializations");
    std::string stats_dir;
    cmd_init->add_option("--stats-dir", stats_dir,
                         "read stats_layer<k>.filt from here instead of recomputing");
    CLI::App* cmd_train = app.add_subcommand("train", "adapter fine-tuning with metrics CSV");
    std::string init_dir;
    cmd_train->add_option("--init-dir", init_dir,
                          "read init_layer<k>.filt from here instead of recomputing");
    CLI::App* cmd_probe = app.add_subcommand("probe", "symmetric perturbation taylor report");
    std::string init_path;
    cmd_probe->add_option("--init", init_path,
                          "probe this init file's selected directions only");
    CLI::App* cmd_preliminary =
        app.add_subcommand("preliminary", "direction-group ranking study");
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "selection-variant grid over seeds");
    CLI::App* cmd_overlap =
        app.add_subcommand("overlap", "pairwise selection overlap percentages");
    std::vector<std::string> task_args;
    cmd_overlap->add_option("tasks", task_args, "name=path pairs of selection.filt files")
        ->expected(-2);
    CLI::App* cmd_timing = app.add_subcommand("timing", "phase wall-clock and peak bytes");

    for (CLI::App* sub : {cmd_stats, cmd_init, cmd_train, cmd_probe, cmd_preliminary,
                          cmd_ablate, cmd_overlap, cmd_timing}) {
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        filet::RunConfig cfg;
        if (!config_path.empty()) {
            cfg = filet::make_run_config(filet::load_config(config_path));
        }
        if (seed_opt->count() > 0) cfg.seed = seed_override;

        filet::CommandOutput out;
        if (cmd_stats->parsed()) {
            out = filet::run_stats(cfg, out_dir);
        } else if (cmd_init->parsed()) {
            out = filet::run_init(cfg, out_dir, stats_dir);
        } else if (cmd_train->parsed()) {
            out = filet::run_train(cfg, out_dir, init_dir);
        } else if (cmd_probe->parsed()) {
            out = filet::run_probe(cfg, out_dir, init_path);
        } else if (cmd_preliminary->parsed()) {
            out = filet::run_preliminary(cfg, out_dir);
        } else if (cmd_ablate->parsed()) {
            out = filet::run_ablate(cfg, out_dir);
        } else if (cmd_overlap->parsed()) {
            out = filet::run_overlap(parse_tasks(task_args), cfg, out_dir);
        } else if (cmd_timing->parsed()) {
            out = filet::run_timing(cfg, out_dir);
        }

        for (const std::string& name : out.artifacts) {
            std::cout << "wrote " << out_dir << "/" << name << "\n";
        }
        return 0;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
