#pragma once

// Reference implementations used as independent oracles by the tests and the
// acceptance run. They share no code with the library.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace mixft::test {

// Direct summation, written independently of the library: mean abs error over
// the horizon divided by the mean abs seasonal difference over the context.
inline double mase_oracle(const std::vector<double>& yhat, const std::vector<double>& y, const std::vector<double>& x, int S) {
    long double mae = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mae += std::fabs(static_cast<long double>(yhat[i]) - y[i]);
    }
    mae /= y.size();
    long double naive = 0;
    std::size_t terms = 0;
    for (std::size_t t = S; t < x.size(); ++t) {
        naive += std::fabs(static_cast<long double>(x[t]) - x[t - S]);
        ++terms;
    }
    naive /= terms;
    return static_cast<double>(mae / naive);
}

// Maximum-likelihood EM for a diagonal two-component GMM. Kept independent of
// the library: plain loops, no shared helpers.
struct EmFit {
    Eigen::MatrixXd means;
    std::vector<int> labels;
};

inline EmFit em_oracle(const Eigen::MatrixXd& Z, int iters) {
    const auto N = Z.rows();
    const auto d = Z.cols();
    // start from the two points farthest apart along the first axis
    Eigen::Index lo = 0, hi = 0;
    Z.col(0).minCoeff(&lo);
    Z.col(0).maxCoeff(&hi);
    Eigen::MatrixXd mu(2, d);
    mu.row(0) = Z.row(lo);
    mu.row(1) = Z.row(hi);
    Eigen::MatrixXd var = Eigen::MatrixXd::Ones(2, d);
    double w[2] = {0.5, 0.5};
    Eigen::MatrixXd R(N, 2);
    for (int it = 0; it < iters; ++it) {
        for (Eigen::Index n = 0; n < N; ++n) {
            double lp[2];
            for (int k = 0; k < 2; ++k) {
                lp[k] = std::log(w[k]);
                for (Eigen::Index j = 0; j < d; ++j) {
                    const double diff = Z(n, j) - mu(k, j);
                    lp[k] += -0.5 * std::log(2 * M_PI * var(k, j)) - 0.5 * diff * diff / var(k, j);
                }
            }
            const double m = std::max(lp[0], lp[1]);
            const double s = std::exp(lp[0] - m) + std::exp(lp[1] - m);
            R(n, 0) = std::exp(lp[0] - m) / s;
            R(n, 1) = std::exp(lp[1] - m) / s;
        }
        for (int k = 0; k < 2; ++k) {
            const double nk = R.col(k).sum();
            w[k] = nk / static_cast<double>(N);
            for (Eigen::Index j = 0; j < d; ++j) {
                double sx = 0;
                for (Eigen::Index n = 0; n < N; ++n) sx += R(n, k) * Z(n, j);
                mu(k, j) = sx / nk;
                double sv = 0;
                for (Eigen::Index n = 0; n < N; ++n) sv += R(n, k) * (Z(n, j) - mu(k, j)) * (Z(n, j) - mu(k, j));
                var(k, j) = std::max(sv / nk, 1e-6);
            }
        }
    }
    EmFit fit{mu, {}};
    for (Eigen::Index n = 0; n < N; ++n) fit.labels.push_back(R(n, 1) > R(n, 0) ? 1 : 0);
    return fit;
}

} // namespace mixft::test
