#pragma once

#include <filesystem>

#include "claimcast/calibration.hpp"
#include "claimcast/nn.hpp"
#include "claimcast/tuning.hpp"

namespace claimcast {

// Self-describing model snapshot: architecture, flat parameter vector,
// batch-norm running statistics, the normalisation stats the features were
// built with, the training seed and the fitted smearing factor.
struct Checkpoint {
    int version = 1;
    ModelSpec spec;
    std::vector<double> params;
    std::vector<BatchNormState> bn_states;
    NormalisationStats stats;
    std::uint64_t seed = 0;
    SmearingFactor smearing;
    GridPoint combo;
    bool include_current_ce = false;
};

Checkpoint make_checkpoint(const Model& model, const NormalisationStats& stats,
                           std::uint64_t seed, const SmearingFactor& smearing,
                           const GridPoint& combo, bool include_current_ce);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuild a ready-to-predict model from a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace claimcast
