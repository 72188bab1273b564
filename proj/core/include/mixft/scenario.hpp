#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixft/series.hpp"

namespace mixft::scenario {

/// Two sinusoidal regimes with different periods and noise levels, spread
/// unevenly over several datasets, plus a separate pretraining corpus.
struct TwoRegimeConfig {
    double period_a = 8.0;
    double noise_a = 0.1;
    double period_b = 24.0;
    double noise_b = 0.5;
    int segment_length = 100;
    double stay = 0.95;          // chance a mixed series keeps its regime at a segment boundary
    int seasonality = 24;
    int length = 1000;
    int series_per_dataset = 4;
    int pretrain_series = 32;
    std::vector<double> pretrain_periods{5.0, 10.0, 16.0, 30.0};
    double pretrain_noise = 0.2;
    std::uint64_t seed = 0;
};

struct TwoRegime {
    std::vector<series::Corpus> finetune;   // ft_a, ft_b, ft_mix1, ft_mix2
    std::vector<series::Corpus> evaluation; // ev_a, ev_b, ev_mix
    series::Corpus pretrain;
};

TwoRegime two_regime(const TwoRegimeConfig& cfg);

} // namespace mixft::scenario
