#pragma once

#include <string>
#include <vector>

#include "claimcast/training.hpp"

namespace claimcast {

// Per-variant candidate lists. Everything not listed here (activation,
// optimiser, epochs, patience, dropout, loss, normalisation placement) is
// fixed and carried through unchanged.
struct GridSpace {
    std::vector<int> lstm_layers{2, 3};
    std::vector<int> lstm_units{8, 16};
    std::vector<double> lstm_learning_rates{0.001, 0.01};
    std::vector<int> lstm_batch_sizes{256, 512};

    std::vector<int> fnn_layers{2, 3, 4};
    std::vector<int> fnn_units{16, 32};
    std::vector<double> fnn_learning_rates{0.001, 0.01};
    std::vector<int> fnn_batch_sizes{512, 1024};
};

struct GridPoint {
    int index = 0;
    int layers = 0;
    int units = 0;
    double learning_rate = 0.0;
    int batch_size = 0;
};

// Cartesian product in a fixed order (layers, units, learning rate, batch
// size): 16 combinations for the LSTM variants, 24 for the FNN variants
// under the default space.
std::vector<GridPoint> enumerate_grid(const GridSpace& space, Variant variant);

struct LeaderboardEntry {
    GridPoint combo;
    bool failed = false;
    std::string error;
    double best_val_loss = 0.0;
    int best_epoch = 0;
};

struct TuneResult {
    GridPoint best;
    std::vector<LeaderboardEntry> leaderboard;  // in grid order
};

struct TuneOptions {
    TrainingConfig base;   // learning rate / batch size overridden per combo
    std::uint64_t seed = 0;
    int n_seeds = 1;       // > 1 averages the best validation loss over seeds
    std::size_t workers = 1;
};

// Trains every combination once (or n_seeds times) and returns the argmin of
// best validation loss, ties broken by grid order. Failed combinations are
// recorded and skipped; if everything fails a tuning_error is thrown.
TuneResult tune(const GridSpace& space, Variant variant, const EncodedDataset& train,
                const EncodedDataset& val, const TuneOptions& options);

}  // namespace claimcast
