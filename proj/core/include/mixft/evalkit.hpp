#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mixft/metrics.hpp"
#include "mixft/pipeline.hpp"
#include "mixft/series.hpp"

namespace mixft::eval {

struct EvalRecord {
    std::string dataset;
    std::string method;
    std::string seed; // decimal seed, or "all" for the across-seed aggregate
    Summary summary;
};

struct EntropyReport {
    std::vector<std::string> datasets;
    std::vector<double> mean_bits; // per dataset
    std::vector<std::size_t> windows;
    double overall_bits = 0.0;     // mean over all windows
};

/// Average classification entropy of the routing probabilities per dataset.
/// windows_by_dataset[i] holds the windows of dataset i.
EntropyReport entropy_report(const pipeline::MixftArtifact& artifact,
                             const std::vector<std::vector<series::Window>>& windows_by_dataset);

struct Timeline {
    std::string series_id;
    int channel = 0;
    std::vector<int> time;      // index of the last context step
    std::vector<int> component; // routed sub-domain
    std::vector<int> truth;     // generator regime at that step, empty if unknown
};

/// Routes every stride-1 context window of one channel, ordered by time.
Timeline membership_timeline(const pipeline::MixftArtifact& artifact, const series::TimeSeries& series, int channel);

/// Fraction of timeline points whose component matches truth under the best
/// relabelling of components. Requires truth labels.
double timeline_accuracy(const Timeline& tl, int components);

// CSV writers. Numbers use %.17g so reruns are byte-identical.
void write_mase_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
void write_ranks_csv(const RankTable& table, const std::filesystem::path& path);
void write_entropy_csv(const EntropyReport& report, const std::filesystem::path& path);
void write_timeline_csv(const Timeline& tl, const std::filesystem::path& path);
void write_report_readme(const std::filesystem::path& dir);

// SVG charts.
struct Series2D {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};
std::string step_plot_svg(const std::string& title, const std::vector<Series2D>& lines);
std::string line_plot_svg(const std::string& title, const std::vector<Series2D>& lines);
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::vector<double>& errors);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string timeline_file_stem(const Timeline& tl);

} // namespace mixft::eval
