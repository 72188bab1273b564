#include "mixft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixft/errors.hpp"

namespace mixft::eval {

std::optional<double> mase(std::span<const double> forecast, std::span<const double> target,
                           std::span<const double> context, int seasonality) {
    const auto L = static_cast<int>(context.size());
    const auto H = static_cast<int>(target.size());
    if (forecast.size() != target.size() || H == 0) {
        throw DataError("forecast and target must have the same nonzero length");
    }
    if (seasonality < 1 || seasonality >= L) {
        throw ConfigError("MASE needs 1 <= S < L (S = " + std::to_string(seasonality) + ", L = " + std::to_string(L) + ")");
    }
    double num = 0.0;
    for (int i = 0; i < H; ++i) {
        num += std::abs(forecast[i] - target[i]);
    }
    double den = 0.0;
    for (int i = 0; i + seasonality < L; ++i) {
        den += std::abs(context[i] - context[i + seasonality]);
    }
    if (!(den > 0.0)) {
        return std::nullopt;
    }
    return (static_cast<double>(L - seasonality) / H) * num / den;
}

Summary summarize(const std::vector<std::optional<double>>& values) {
    std::vector<double> defined;
    Summary s;
    for (const auto& v : values) {
        if (v) {
            defined.push_back(*v);
        } else {
            ++s.undefined;
        }
    }
    auto d = summarize(defined);
    d.undefined = s.undefined;
    return d;
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) {
        s.mean = std::nan("");
        return s;
    }
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.stderr_ = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
    }
    return s;
}

Vec rank_scores(const Vec& scores, TieMethod ties) {
    const auto n = scores.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
    Vec ranks(n);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) {
            ++j;
        }
        // positions i..j (zero-based) are tied
        const double r = ties == TieMethod::Average ? (static_cast<double>(i + j) / 2.0 + 1.0) : static_cast<double>(i + 1);
        for (std::size_t k = i; k <= j; ++k) {
            ranks(order[k]) = r;
        }
        i = j + 1;
    }
    return ranks;
}

RankTable average_rank(std::vector<std::string> datasets, std::vector<std::string> methods, const Mat& scores,
                       TieMethod ties) {
    if (scores.rows() != static_cast<Eigen::Index>(datasets.size()) ||
        scores.cols() != static_cast<Eigen::Index>(methods.size())) {
        throw DataError("score table shape does not match dataset/method labels");
    }
    if (scores.rows() == 0) {
        throw DataError("rank table needs at least one dataset");
    }
    if (scores.hasNaN()) {
        throw DataError("rank table has missing (NaN) cells");
    }
    RankTable t;
    t.datasets = std::move(datasets);
    t.methods = std::move(methods);
    t.scores = scores;
    t.ranks.resize(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        t.ranks.row(r) = rank_scores(scores.row(r).transpose(), ties).transpose();
    }
    t.average = t.ranks.colwise().mean().transpose();
    return t;
}

} // namespace mixft::eval
