#include "mixft/scenario.hpp"

namespace mixft::scenario {
namespace {

series::RegimeSpec regime_spec(const TwoRegimeConfig& cfg, double stay, std::vector<double> initial) {
    series::RegimeSpec spec;
    spec.regimes = {{cfg.period_a, 1.0, cfg.noise_a, 0.0, 0.0}, {cfg.period_b, 1.0, cfg.noise_b, 0.0, 0.0}};
    spec.transition.resize(2, 2);
    spec.transition << stay, 1.0 - stay, 1.0 - stay, stay;
    spec.initial = std::move(initial);
    spec.segment_length = cfg.segment_length;
    spec.seasonality = cfg.seasonality;
    return spec;
}

} // namespace

TwoRegime two_regime(const TwoRegimeConfig& cfg) {
    TwoRegime out;
    const auto seed = [&](std::uint64_t tag) { return derive_seed(cfg.seed, tag); };
    const int n = cfg.series_per_dataset;

    out.finetune.push_back(series::synth_corpus(regime_spec(cfg, 1.0, {1.0, 0.0}), n, cfg.length, seed(1), "ft_a"));
    out.finetune.push_back(series::synth_corpus(regime_spec(cfg, 1.0, {0.0, 1.0}), n, cfg.length, seed(2), "ft_b"));
    out.finetune.push_back(series::synth_corpus(regime_spec(cfg, cfg.stay, {0.7, 0.3}), n, cfg.length, seed(3), "ft_mix1"));
    out.finetune.push_back(series::synth_corpus(regime_spec(cfg, cfg.stay, {0.3, 0.7}), n, cfg.length, seed(4), "ft_mix2"));

    out.evaluation.push_back(series::synth_corpus(regime_spec(cfg, 1.0, {1.0, 0.0}), n, cfg.length, seed(11), "ev_a"));
    out.evaluation.push_back(series::synth_corpus(regime_spec(cfg, 1.0, {0.0, 1.0}), n, cfg.length, seed(12), "ev_b"));
    out.evaluation.push_back(series::synth_corpus(regime_spec(cfg, cfg.stay, {0.5, 0.5}), n, cfg.length, seed(13), "ev_mix"));

    series::RegimeSpec pre;
    const auto P = cfg.pretrain_periods.size();
    for (double period : cfg.pretrain_periods) {
        pre.regimes.push_back({period, 1.0, cfg.pretrain_noise, 0.0, 0.0});
    }
    pre.transition = Mat::Constant(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P), 1.0 / static_cast<double>(P));
    pre.segment_length = cfg.segment_length;
    pre.seasonality = cfg.seasonality;
    out.pretrain = series::synth_corpus(pre, cfg.pretrain_series, cfg.length, seed(21), "pretrain");
    return out;
}

} // namespace mixft::scenario
