// claimcast — simulate individual claim histories, prepare leakage-free
// datasets, tune and train reserving models, and report the metric suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "claimcast/errors.hpp"
#include "claimcast/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string profile;
    std::string out_dir;
    std::vector<std::string> variants;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;
    bool workers_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Experiment config JSON");
    cmd->add_option("--profile", opts.profile, "Built-in profile: desk or paper");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--variants", opts.variants,
                    "Model variants to run (FNN, FNN+, LSTM, LSTM+, CE-baseline)")
        ->delimiter(',');
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&opts](std::uint64_t v) { opts.seed = v; opts.seed_set = true; },
           "Root seed");
    cmd->add_option_function<std::size_t>(
           "--workers", [&opts](std::size_t v) { opts.workers = v; opts.workers_set = true; },
           "Worker pool size (0 = all cores)");
}

claimcast::ExperimentConfig resolve_config(const CommonOpts& opts) {
    claimcast::ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = claimcast::load_experiment_config(opts.config_path);
        if (!opts.profile.empty() && opts.profile != cfg.profile)
            throw claimcast::config_error(
                "--profile conflicts with the profile in the config file");
    } else if (!opts.profile.empty()) {
        cfg = claimcast::profile_by_name(opts.profile);
    } else {
        cfg = claimcast::desk_profile();
    }
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.variants.empty()) cfg.variants = opts.variants;
    if (opts.workers_set) cfg.workers = opts.workers;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Individual-claims loss reserving laboratory: transactional claim "
        "simulation, leakage-free dataset preparation, neural reserving "
        "models and the case-estimate metric suite."};
    app.require_subcommand(1);

    CommonOpts opts;
    struct Cmd {
        const char* name;
        const char* help;
        void (*fn)(const claimcast::ExperimentConfig&);
    };
    static const Cmd cmds[] = {
        {"simulate", "Generate the synthetic transaction datasets", claimcast::stage_simulate},
        {"prepare", "Assign train/validation/test splits", claimcast::stage_prepare},
        {"tune", "Grid-search hyperparameters on the tuning dataset", claimcast::stage_tune},
        {"train", "Train the winning combination on each evaluation dataset",
         claimcast::stage_train},
        {"evaluate", "Predict at the valuation date and compute metrics",
         claimcast::stage_evaluate},
        {"report", "Aggregate per-dataset reports into the cross-dataset summary",
         claimcast::stage_report},
        {"run", "Full pipeline: simulate, prepare, tune, train, evaluate, report",
         claimcast::run_pipeline},
    };

    std::vector<std::pair<CLI::App*, const Cmd*>> subs;
    for (const Cmd& cmd : cmds) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        add_common(sub, opts);
        subs.emplace_back(sub, &cmd);
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& [sub, cmd] : subs) {
        if (!sub->parsed()) continue;
        try {
            const claimcast::ExperimentConfig cfg = resolve_config(opts);
            cmd->fn(cfg);
        } catch (const std::exception& e) {
            std::cerr << "claimcast " << cmd->name << ": " << e.what() << "\n";
            return EXIT_FAILURE;
        }
    }
    return EXIT_SUCCESS;
}
