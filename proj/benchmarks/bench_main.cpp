#include <random>

#include <benchmark/benchmark.h>

#include "mixft/basemodel.hpp"
#include "mixft/lowrank.hpp"
#include "mixft/metrics.hpp"
#include "mixft/mixture.hpp"

using namespace mixft;

namespace {

std::vector<double> noisy_sine(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 0.2);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] = std::sin(0.7 * t) + g(rng);
    return x;
}

model::ModelConfig config_for(int context, int hidden) {
    model::ModelConfig cfg;
    cfg.context = context;
    cfg.hidden = hidden;
    return cfg;
}

} // namespace

static void BM_Forward(benchmark::State& state) {
    const auto cfg = config_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    const auto m = model::init_model(cfg);
    const auto x = noisy_sine(cfg.context, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model::forward(m, nullptr, x).forecast.data());
    }
}
BENCHMARK(BM_Forward)->Args({64, 16})->Args({520, 64});

static void BM_ForwardAdapted(benchmark::State& state) {
    const auto cfg = config_for(64, 16);
    const auto m = model::init_model(cfg);
    const auto a = lora::init_lora(m, {});
    const auto x = noisy_sine(cfg.context, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model::forward(m, &a, x).forecast.data());
    }
}
BENCHMARK(BM_ForwardAdapted);

static void BM_LossAndGrads(benchmark::State& state) {
    const auto cfg = config_for(64, 16);
    const auto m = model::init_model(cfg);
    std::vector<series::Pair> batch;
    for (int i = 0; i < state.range(0); ++i) {
        const auto x = noisy_sine(cfg.context + cfg.horizon, static_cast<std::uint64_t>(i));
        series::Pair p{Vec(cfg.context), Vec(cfg.horizon)};
        for (int t = 0; t < cfg.context; ++t) p.x(t) = x[static_cast<std::size_t>(t)];
        for (int t = 0; t < cfg.horizon; ++t) p.y(t) = x[static_cast<std::size_t>(cfg.context + t)];
        batch.push_back(p);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(model::loss_and_grads(m, nullptr, batch).loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrads)->Arg(64)->Arg(256);

static void BM_FitVi(benchmark::State& state) {
    const auto n = state.range(0);
    Rng rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat Z(n, 16);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < 16; ++j) Z(i, j) = (i % 2 == 0 ? -2.0 : 2.0) + g(rng);
    }
    const auto prior = mixture::default_prior(Z, 2).prior;
    mixture::FitOptions opts;
    opts.restarts = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mixture::fit_vi(Z, 2, prior, opts).iterations);
    }
}
BENCHMARK(BM_FitVi)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_Mase(benchmark::State& state) {
    const auto x = noisy_sine(520, 4);
    const auto y = noisy_sine(30, 5);
    const auto f = noisy_sine(30, 6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(eval::mase(f, y, x, 24));
    }
}
BENCHMARK(BM_Mase);

BENCHMARK_MAIN();
