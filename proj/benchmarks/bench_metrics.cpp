#include <benchmark/benchmark.h>

#include <claimcast/evaluation.hpp>
#include <claimcast/rng.hpp>

#include <cmath>

using namespace claimcast;

namespace {

PredictionSet synthetic_predictions(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    PredictionSet out;
    out.source = "bench";
    for (std::size_t i = 0; i < n; ++i) {
        PredictionRow r;
        r.claim_id = static_cast<std::uint32_t>(i + 1);
        r.prediction_quarter = 40;
        r.accident_quarter = static_cast<int>(1 + rng.uniform_int(40));
        r.dev_quarter = static_cast<int>(1 + rng.uniform_int(30));
        r.actual_ultimate = std::exp(9.0 + rng.normal());
        r.paid = r.actual_ultimate * 0.8 * rng.uniform01();
        r.y_hat = r.actual_ultimate * std::exp(0.3 * rng.normal());
        r.case_estimate = r.actual_ultimate * std::exp(0.2 * rng.normal());
        out.rows.push_back(r);
    }
    return out;
}

}  // namespace

static void BM_MetricSuite(benchmark::State& state) {
    const PredictionSet a = synthetic_predictions(static_cast<std::size_t>(state.range(0)), 1);
    const PredictionSet b = synthetic_predictions(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(male(a));
        benchmark::DoNotOptimize(msle(a));
        benchmark::DoNotOptimize(ocl_err(a));
        benchmark::DoNotOptimize(m1_vs_m2(a, b, Weighting::Ocl));
    }
}
BENCHMARK(BM_MetricSuite)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

static void BM_Breakdowns(benchmark::State& state) {
    const PredictionSet a = synthetic_predictions(10000, 3);
    for (auto _ : state) {
        auto rows = report_breakdowns(a, GroupKey::QuartersSinceNotification);
        benchmark::DoNotOptimize(rows.size());
    }
}
BENCHMARK(BM_Breakdowns)->Unit(benchmark::kMicrosecond);
