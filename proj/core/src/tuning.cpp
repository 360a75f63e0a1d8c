#include "claimcast/tuning.hpp"

#include <cmath>
#include <limits>

#include "claimcast/errors.hpp"
#include "claimcast/parallel.hpp"

namespace claimcast {

std::vector<GridPoint> enumerate_grid(const GridSpace& space, Variant variant) {
    const bool recurrent = variant_is_recurrent(variant);
    const auto& layers = recurrent ? space.lstm_layers : space.fnn_layers;
    const auto& units = recurrent ? space.lstm_units : space.fnn_units;
    const auto& rates = recurrent ? space.lstm_learning_rates : space.fnn_learning_rates;
    const auto& batches = recurrent ? space.lstm_batch_sizes : space.fnn_batch_sizes;

    std::vector<GridPoint> grid;
    int index = 0;
    for (int l : layers)
        for (int u : units)
            for (double lr : rates)
                for (int b : batches) {
                    GridPoint p;
                    p.index = index++;
                    p.layers = l;
                    p.units = u;
                    p.learning_rate = lr;
                    p.batch_size = b;
                    grid.push_back(p);
                }
    return grid;
}

TuneResult tune(const GridSpace& space, Variant variant, const EncodedDataset& train,
                const EncodedDataset& val, const TuneOptions& options) {
    if (train.variant != variant || val.variant != variant)
        throw config_error("tune: datasets were encoded for a different variant");
    if (options.n_seeds < 1) throw config_error("tune: n_seeds must be >= 1");

    const std::vector<GridPoint> grid = enumerate_grid(space, variant);
    std::vector<LeaderboardEntry> leaderboard(grid.size());

    parallel_for(grid.size(), options.workers, [&](std::size_t gi) {
        const GridPoint& combo = grid[gi];
        LeaderboardEntry entry;
        entry.combo = combo;
        try {
            TrainingConfig config = options.base;
            config.optimiser.learning_rate = combo.learning_rate;
            config.batch_size = combo.batch_size;

            double loss_sum = 0.0;
            int best_epoch = 0;
            for (int s = 0; s < options.n_seeds; ++s) {
                config.seed = derive_seed(options.seed, "tune-train", static_cast<std::uint64_t>(s));
                Model model(ModelSpec::for_variant(variant, combo.layers, combo.units,
                                                   train.n_static(), train.n_channels()));
                RngStream init(derive_seed(config.seed, "init"));
                model.init_params(init);
                const TrainingResult result = train_model(model, train, val, config);
                loss_sum += result.best_val_loss;
                best_epoch = result.best_epoch;
            }
            entry.best_val_loss = loss_sum / static_cast<double>(options.n_seeds);
            entry.best_epoch = best_epoch;
        } catch (const std::exception& e) {
            entry.failed = true;
            entry.error = e.what();
        }
        leaderboard[gi] = std::move(entry);
    });

    TuneResult result;
    result.leaderboard = std::move(leaderboard);
    double best = std::numeric_limits<double>::infinity();
    const LeaderboardEntry* winner = nullptr;
    for (const LeaderboardEntry& entry : result.leaderboard) {
        if (entry.failed) continue;
        if (entry.best_val_loss < best) {
            best = entry.best_val_loss;
            winner = &entry;
        }
    }
    if (winner == nullptr) throw tuning_error("tune: every grid combination failed");
    result.best = winner->combo;
    return result;
}

}  // namespace claimcast
