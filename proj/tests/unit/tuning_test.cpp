#include <doctest.h>

#include <claimcast/errors.hpp>
#include <claimcast/rng.hpp>
#include <claimcast/tuning.hpp>

using namespace claimcast;

namespace {

EncodedDataset synthetic_dataset(std::uint64_t seed, int n) {
    RngStream rng(seed);
    EncodedDataset ds;
    ds.variant = Variant::FNN;
    ds.static_cont.resize(n, 2);
    ds.severity_idx.assign(static_cast<std::size_t>(n), 0);
    ds.age_idx.assign(static_cast<std::size_t>(n), 0);
    ds.targets.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x0 = rng.normal();
        const double x1 = rng.normal();
        ds.static_cont(i, 0) = x0;
        ds.static_cont(i, 1) = x1;
        ds.targets(i) = 0.5 * x0 - 0.2 * x1;
    }
    return ds;
}

}  // namespace

TEST_CASE("grid cardinality: 16 for LSTM variants, 24 for FNN variants") {
    const GridSpace space;
    CHECK(enumerate_grid(space, Variant::LSTM).size() == 16);
    CHECK(enumerate_grid(space, Variant::LSTMPlus).size() == 16);
    CHECK(enumerate_grid(space, Variant::FNN).size() == 24);
    CHECK(enumerate_grid(space, Variant::FNNPlus).size() == 24);
}

TEST_CASE("grid enumeration is deterministic and indexed in order") {
    const GridSpace space;
    const auto a = enumerate_grid(space, Variant::FNN);
    const auto b = enumerate_grid(space, Variant::FNN);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].index == static_cast<int>(i));
        CHECK(a[i].layers == b[i].layers);
        CHECK(a[i].units == b[i].units);
        CHECK(a[i].learning_rate == b[i].learning_rate);
        CHECK(a[i].batch_size == b[i].batch_size);
    }
}

TEST_CASE("singleton candidate lists give one combination") {
    GridSpace space;
    space.fnn_layers = {2};
    space.fnn_units = {8};
    space.fnn_learning_rates = {0.01};
    space.fnn_batch_sizes = {32};
    const auto grid = enumerate_grid(space, Variant::FNN);
    REQUIRE(grid.size() == 1);
    CHECK(grid[0].layers == 2);
    CHECK(grid[0].units == 8);
}

TEST_CASE("tune picks the combination that can actually learn") {
    // Two combinations distinguished by learning rate: 1e-12 cannot move the
    // weights, 0.01 fits the synthetic mapping.
    GridSpace space;
    space.fnn_layers = {2};
    space.fnn_units = {8};
    space.fnn_learning_rates = {1e-12, 0.01};
    space.fnn_batch_sizes = {64};
    const EncodedDataset train = synthetic_dataset(1, 256);
    const EncodedDataset val = synthetic_dataset(2, 128);
    TuneOptions options;
    options.base.max_epochs = 30;
    options.base.patience = 10;
    options.seed = 5;
    const TuneResult result = tune(space, Variant::FNN, train, val, options);
    CHECK(result.best.learning_rate == 0.01);
    REQUIRE(result.leaderboard.size() == 2);
    CHECK(result.leaderboard[0].best_val_loss > result.leaderboard[1].best_val_loss);
    // Selection optimality: the winner is the leaderboard minimum.
    for (const LeaderboardEntry& e : result.leaderboard)
        if (!e.failed)
            CHECK(result.leaderboard[1].best_val_loss <= e.best_val_loss);
}

TEST_CASE("tuning twice with the same seed gives an identical leaderboard") {
    GridSpace space;
    space.fnn_layers = {2, 3};
    space.fnn_units = {4};
    space.fnn_learning_rates = {0.01};
    space.fnn_batch_sizes = {64};
    const EncodedDataset train = synthetic_dataset(3, 128);
    const EncodedDataset val = synthetic_dataset(4, 64);
    TuneOptions options;
    options.base.max_epochs = 10;
    options.base.patience = 5;
    options.seed = 7;
    options.workers = 2;
    const TuneResult a = tune(space, Variant::FNN, train, val, options);
    const TuneResult b = tune(space, Variant::FNN, train, val, options);
    REQUIRE(a.leaderboard.size() == b.leaderboard.size());
    for (std::size_t i = 0; i < a.leaderboard.size(); ++i) {
        CHECK(a.leaderboard[i].best_val_loss == b.leaderboard[i].best_val_loss);
        CHECK(a.leaderboard[i].best_epoch == b.leaderboard[i].best_epoch);
    }
    CHECK(a.best.index == b.best.index);
}

TEST_CASE("a failing combination is recorded and skipped; all failures abort") {
    GridSpace space;
    space.fnn_layers = {2};
    space.fnn_units = {8};
    space.fnn_learning_rates = {0.01};
    space.fnn_batch_sizes = {1, 64};  // batch size 1 cannot train with batch norm
    const EncodedDataset train = synthetic_dataset(8, 128);
    const EncodedDataset val = synthetic_dataset(9, 64);
    TuneOptions options;
    options.base.max_epochs = 5;
    options.base.patience = 5;
    options.seed = 11;
    const TuneResult result = tune(space, Variant::FNN, train, val, options);
    REQUIRE(result.leaderboard.size() == 2);
    CHECK(result.leaderboard[0].failed);
    CHECK(!result.leaderboard[0].error.empty());
    CHECK(!result.leaderboard[1].failed);
    CHECK(result.best.batch_size == 64);

    space.fnn_batch_sizes = {1};
    CHECK_THROWS_AS(tune(space, Variant::FNN, train, val, options), tuning_error);
}
