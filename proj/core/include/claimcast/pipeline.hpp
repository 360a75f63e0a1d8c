#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "claimcast/checkpoint.hpp"
#include "claimcast/dataset.hpp"
#include "claimcast/evaluation.hpp"
#include "claimcast/simulator.hpp"
#include "claimcast/tuning.hpp"

namespace claimcast {

inline constexpr const char* kCeBaselineName = "CE-baseline";

struct SplitConfig {
    SplitMode mode = SplitMode::Finalisation;
    double train_cutoff = 36.0;
    double valuation = 40.0;
    double move_fraction = 0.20;
    std::array<double, 3> fractions{0.6, 0.2, 0.2};  // naive mode
};

// Full experiment description. Dataset 0 is the designated tuning dataset;
// datasets 1..n_eval_datasets are the evaluation datasets. All randomness
// flows from `seed` through named sub-streams.
struct ExperimentConfig {
    std::string profile = "desk";
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
    std::vector<std::string> variants{"FNN", "FNN+", "LSTM", "LSTM+", kCeBaselineName};
    int n_eval_datasets = 5;
    SimulationConfig simulation;
    SplitConfig split;
    GridSpace grid;
    int max_epochs = 200;
    int patience = 5;
    bool include_current_ce = false;
    int tuning_seeds = 1;
    std::size_t workers = 0;  // 0 = hardware concurrency

    int valuation_quarter() const { return static_cast<int>(split.valuation); }
    std::vector<std::string> nn_variants() const;  // variants minus the CE baseline
    bool wants_ce() const;
    void validate() const;
};

// Desk scale: 20 accident quarters, ~3,000 claims per dataset, 5 datasets.
ExperimentConfig desk_profile();
// Paper scale: 40 accident quarters, ~30,000 claims per dataset, 50 datasets.
ExperimentConfig paper_profile();
ExperimentConfig profile_by_name(const std::string& name);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json_text(const std::string& text);
std::string experiment_config_to_json_text(const ExperimentConfig& cfg);

// Stage entry points; each consumes the previous stage's outputs and is
// independently invocable. Completed stages are stamped with a content key
// and skipped on reruns with identical configuration.
void stage_simulate(const ExperimentConfig& cfg);
void stage_prepare(const ExperimentConfig& cfg);
void stage_tune(const ExperimentConfig& cfg);
void stage_train(const ExperimentConfig& cfg);
void stage_evaluate(const ExperimentConfig& cfg);
void stage_report(const ExperimentConfig& cfg);

// simulate -> prepare -> tune -> train -> evaluate -> report. Failures abort
// with the stage name and dataset id in the message; partial outputs are
// preserved.
void run_pipeline(const ExperimentConfig& cfg);

// Dataset directory name, "ds_000" for the tuning dataset.
std::string dataset_name(int dataset_id);

}  // namespace claimcast
