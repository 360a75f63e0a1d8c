#pragma once

#include <cstdint>
#include <vector>

#include "claimcast/nn.hpp"

namespace claimcast {

struct AdamWConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::vector<double> m, v;
    long step = 0;
};

// One decoupled-weight-decay Adam update: bias-corrected moments drive the
// gradient step and the decay is applied to the parameters directly rather
// than folded into the gradients.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamWState& state,
                const AdamWConfig& config);

struct TrainingConfig {
    AdamWConfig optimiser;
    int max_epochs = 200;
    int patience = 5;
    int batch_size = 512;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainingResult {
    std::vector<double> train_losses;  // mean batch MSE per epoch
    std::vector<double> val_losses;    // eval-mode MSE per epoch
    int stopped_epoch = 0;             // 1-based; == epochs actually run
    int best_epoch = 0;                // 1-based epoch of the restored weights
    double best_val_loss = 0.0;
};

// Mini-batch training with seeded shuffling, per-epoch eval-mode validation
// loss, early stopping on `patience` epochs without improvement, and
// restoration of the best weights. Deterministic given (seed, data).
TrainingResult train_model(Model& model, const EncodedDataset& train, const EncodedDataset& val,
                           const TrainingConfig& config);

// Split [0, n) into batches of `batch_size` in the given order; a trailing
// singleton is merged into the previous batch so training-mode batch norm
// always sees at least two rows.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size);

// Eval-mode MSE over a dataset.
double evaluate_loss(const Model& model, const EncodedDataset& ds, std::size_t batch_size = 1024);

}  // namespace claimcast
