#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixft/common.hpp"

namespace mixft::series {

/// Multichannel series; rows are time steps, columns channels.
struct TimeSeries {
    std::string id;
    Mat values;
    int seasonality = 1;
    std::vector<std::string> channel_names;
    // Ground-truth regime per time step. Synthetic data only; empty otherwise.
    std::vector<int> regime_labels;

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }
};

/// One dataset: a named collection of series.
struct Corpus {
    std::string id;
    std::vector<TimeSeries> series;
};

struct WindowSpec {
    int context = 64;
    int horizon = 8;
    int stride = 1;

    void validate() const;
};

struct Window {
    Vec context;
    Vec target; // empty for context-only enumeration
    std::string dataset_id;
    std::string series_id;
    int channel = 0;
    int start = 0;
    int seasonality = 1;
    std::optional<int> regime;
};

TimeSeries ingest_csv(const std::filesystem::path& path, int seasonality);

/// Training windows: context plus a full horizon target. Per channel this
/// yields T - L - H + 1 windows at stride 1.
std::vector<Window> window(const TimeSeries& series, const WindowSpec& spec, const std::string& dataset_id = {});

/// Context-only windows (no target), T - L + 1 per channel at stride 1.
std::vector<Window> context_windows(const TimeSeries& series, const WindowSpec& spec, int channel,
                                    const std::string& dataset_id = {});

/// Windows every series in the corpus; series too short for the spec are skipped.
std::vector<Window> window_corpus(const Corpus& corpus, const WindowSpec& spec);

std::size_t training_window_count(Eigen::Index length, const WindowSpec& spec);
std::size_t context_window_count(Eigen::Index length, const WindowSpec& spec);

inline constexpr double kScaleFloor = 1e-8;

struct Normalized {
    Vec values;
    double loc = 0.0;
    double scale = 1.0;
};

Normalized instance_normalize(std::span<const double> x);
Vec denormalize(const Vec& normalized, double loc, double scale);

struct Pair {
    Vec x;
    Vec y;
};

struct MixupResult {
    std::vector<Pair> pairs;
    bool passthrough = false; // batch had fewer than two pairs
};

/// Draws lambda ~ Beta(a, a) using two Gamma variates.
double sample_beta(double a, Rng& rng);

MixupResult mixup(const std::vector<Pair>& batch, double beta_param, Rng& rng);

/// Mixup with an injected lambda source; partners still drawn from rng.
MixupResult mixup(const std::vector<Pair>& batch, const std::function<double()>& lambda_source, Rng& rng);

struct RegimeParams {
    double period = 8.0;
    double amplitude = 1.0;
    double noise = 0.1;
    double trend = 0.0;
    double level = 0.0;
};

struct RegimeSpec {
    std::vector<RegimeParams> regimes;
    Mat transition;                    // K x K, row-stochastic
    std::vector<double> initial;       // empty: series i starts in regime i mod K
    int segment_length = 100;
    int seasonality = 24;
    std::uint64_t seed = 0;

    int num_regimes() const { return static_cast<int>(regimes.size()); }
    void validate() const;
};

/// Markov-switching sinusoid generator. Regimes hold for fixed-length
/// segments; a new regime is drawn from the transition row at each boundary.
Corpus synth_corpus(const RegimeSpec& spec, int num_series, int length, std::uint64_t seed,
                    const std::string& corpus_id = "synth");

/// Directory of `<series_id>.csv` plus `manifest.json`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

void write_series_csv(const TimeSeries& series, const std::filesystem::path& path);

} // namespace mixft::series
