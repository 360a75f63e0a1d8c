#include <benchmark/benchmark.h>

#include <claimcast/dataset.hpp>
#include <claimcast/simulator.hpp>

using namespace claimcast;

static SimulationConfig desk_config() {
    SimulationConfig cfg;
    cfg.n_accident_quarters = 20;
    cfg.expected_claims_per_quarter = 150.0;
    cfg.seed = 1;
    return cfg;
}

static void BM_SimulatePortfolioDesk(benchmark::State& state) {
    const SimulationConfig cfg = desk_config();
    for (auto _ : state) {
        Portfolio p = simulate_portfolio(cfg);
        benchmark::DoNotOptimize(p.size());
    }
}
BENCHMARK(BM_SimulatePortfolioDesk)->Unit(benchmark::kMillisecond);

static void BM_BuildObservationsDesk(benchmark::State& state) {
    const Portfolio p = simulate_portfolio(desk_config());
    for (auto _ : state) {
        auto obs = build_observations(p);
        benchmark::DoNotOptimize(obs.size());
    }
}
BENCHMARK(BM_BuildObservationsDesk)->Unit(benchmark::kMillisecond);
