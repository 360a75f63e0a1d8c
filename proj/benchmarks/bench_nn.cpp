#include <benchmark/benchmark.h>

#include <claimcast/nn.hpp>

using namespace claimcast;

namespace {

Batch make_random_batch(int b, int n_static, int channels, int len) {
    RngStream rng(3);
    Batch batch;
    batch.static_cont.resize(b, n_static);
    for (Eigen::Index r = 0; r < b; ++r)
        for (Eigen::Index c = 0; c < n_static; ++c) batch.static_cont(r, c) = rng.normal();
    batch.severity_idx.assign(static_cast<std::size_t>(b), 1);
    batch.age_idx.assign(static_cast<std::size_t>(b), 2);
    batch.targets = Vec::Zero(b);
    if (channels > 0) {
        batch.seq_len.assign(static_cast<std::size_t>(b), len);
        batch.steps.assign(static_cast<std::size_t>(len), Mat::Zero(b, channels));
        for (auto& step : batch.steps)
            for (Eigen::Index r = 0; r < b; ++r)
                for (Eigen::Index c = 0; c < channels; ++c) step(r, c) = rng.normal();
    }
    return batch;
}

}  // namespace

static void BM_LstmForwardBackward(benchmark::State& state) {
    Model model(ModelSpec::for_variant(Variant::LSTMPlus, 2, 16, 3, 4));
    RngStream init(1);
    model.init_params(init);
    const Batch batch = make_random_batch(256, 3, 4, static_cast<int>(state.range(0)));
    ForwardCache cache;
    for (auto _ : state) {
        model.params().zero_grads();
        const Vec pred = model.forward(batch, true, cache);
        const Vec dpred = 2.0 * pred / 256.0;
        model.backward(batch, cache, dpred);
        benchmark::DoNotOptimize(model.params().grads().data());
    }
}
BENCHMARK(BM_LstmForwardBackward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_FnnForwardBackward(benchmark::State& state) {
    Model model(ModelSpec::for_variant(Variant::FNNPlus, 4, 32, 12, 0));
    RngStream init(2);
    model.init_params(init);
    const Batch batch = make_random_batch(512, 12, 0, 0);
    ForwardCache cache;
    for (auto _ : state) {
        model.params().zero_grads();
        const Vec pred = model.forward(batch, true, cache);
        const Vec dpred = 2.0 * pred / 512.0;
        model.backward(batch, cache, dpred);
        benchmark::DoNotOptimize(model.params().grads().data());
    }
}
BENCHMARK(BM_FnnForwardBackward)->Unit(benchmark::kMillisecond);
