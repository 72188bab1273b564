#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixft/common.hpp"

namespace mixft::eval {

/// Mean absolute scaled error against the in-context seasonal naive forecaster:
///   ((L - S) / H) * sum|yhat - y| / sum_{i < L-S} |x_i - x_{i+S}|
/// Returns nullopt when the denominator is zero (S-periodic constant context).
std::optional<double> mase(std::span<const double> forecast, std::span<const double> target,
                           std::span<const double> context, int seasonality);

struct Summary {
    double mean = 0.0;
    double stderr_ = 0.0; // sample std / sqrt(n); 0 for n = 1
    std::size_t count = 0;
    std::size_t undefined = 0;
};

/// Mean and standard error over defined values; undefined entries are counted and skipped.
Summary summarize(const std::vector<std::optional<double>>& values);
Summary summarize(const std::vector<double>& values);

enum class TieMethod {
    Average, // tied scores share the mean of their positions
    Min,     // tied scores all take the lowest position
};

/// Ascending ranks (1 = lowest score) of one column of scores.
Vec rank_scores(const Vec& scores, TieMethod ties = TieMethod::Average);

struct RankTable {
    std::vector<std::string> datasets; // rows
    std::vector<std::string> methods;  // columns
    Mat scores;                        // datasets x methods
    Mat ranks;
    Vec average;                       // per method
};

/// Ranks methods within each dataset row and averages across rows.
RankTable average_rank(std::vector<std::string> datasets, std::vector<std::string> methods, const Mat& scores,
                       TieMethod ties = TieMethod::Average);

} // namespace mixft::eval
