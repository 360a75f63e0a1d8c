#include "claimcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <utility>

#include "claimcast/errors.hpp"

namespace claimcast {

void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamWState& state,
                const AdamWConfig& config) {
    if (params.size() != grads.size()) throw shape_error("adamw_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw shape_error("adamw_step: stale optimiser state");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
        params[i] -= config.learning_rate * config.weight_decay * params[i];
    }
}

void TrainingConfig::validate() const {
    if (optimiser.learning_rate <= 0.0) throw config_error("learning_rate must be > 0");
    if (max_epochs < 1) throw config_error("max_epochs must be >= 1");
    if (patience < 1) throw config_error("patience must be >= 1");
    if (batch_size < 2) throw config_error("batch_size must be >= 2");
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < n; start += batch_size)
        ranges.emplace_back(start, std::min(n, start + batch_size));
    if (ranges.size() >= 2 && ranges.back().second - ranges.back().first == 1) {
        ranges[ranges.size() - 2].second -= 1;
        ranges.back().first -= 1;
    }
    return ranges;
}

double evaluate_loss(const Model& model, const EncodedDataset& ds, std::size_t batch_size) {
    const Vec pred = model.predict(ds, batch_size);
    return mse_loss(pred, ds.targets);
}

TrainingResult train_model(Model& model, const EncodedDataset& train, const EncodedDataset& val,
                           const TrainingConfig& config) {
    config.validate();
    if (train.size() == 0) throw config_error("train_model: empty training set");
    if (val.size() == 0) throw config_error("train_model: empty validation set");

    RngStream shuffle_rng(derive_seed(config.seed, "shuffle"));
    RngStream dropout_rng(derive_seed(config.seed, "dropout"));

    const std::size_t n = static_cast<std::size_t>(train.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainingResult result;
    std::vector<double> best_params = model.params().values();
    std::vector<BatchNormState> best_bn = model.bn_states();
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_since_best = 0;

    AdamWState opt_state;
    ForwardCache cache;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);

        double train_loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (const auto& [start, stop] : batch_ranges(n, static_cast<std::size_t>(config.batch_size))) {
            const Batch batch =
                make_batch(train, std::span<const std::size_t>(order.data() + start, stop - start));
            model.params().zero_grads();
            const Vec pred = model.forward(batch, true, cache, &dropout_rng);
            const double loss = mse_loss(pred, batch.targets);
            const Vec dpred =
                2.0 * (pred - batch.targets) / static_cast<double>(pred.size());
            model.backward(batch, cache, dpred);
            adamw_step(model.params().values(), model.params().grads(), opt_state,
                       config.optimiser);
            train_loss_sum += loss;
            ++n_batches;
        }
        result.train_losses.push_back(train_loss_sum / static_cast<double>(n_batches));

        const double val_loss = evaluate_loss(model, val);
        result.val_losses.push_back(val_loss);
        result.stopped_epoch = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = model.params().values();
            best_bn = model.bn_states();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= config.patience) break;
        }
    }

    model.params().values() = best_params;
    model.bn_states() = best_bn;
    result.best_epoch = best_epoch;
    result.best_val_loss = best_val;
    return result;
}

}  // namespace claimcast
