#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixft/common.hpp"

namespace mixft::mixture {

/// Normal-inverse-diagonal-Wishart prior plus Dirichlet weights.
/// Per dimension the precision is Gamma(nu/2, rate W_d/2) and the mean is
/// Normal(m_d, 1/(kappa * precision)).
struct GmmPrior {
    Vec mean;  // m
    double kappa = 1.0;
    double nu = 1.0;
    Vec scale; // W, diagonal
    Vec alpha; // Dirichlet concentration, length K

    int dims() const { return static_cast<int>(mean.size()); }
    int components() const { return static_cast<int>(alpha.size()); }
    void validate() const;
};

struct GmmPosterior {
    GmmPrior prior;
    Mat means;  // K x d
    Vec kappa;  // K
    Vec nu;     // K
    Mat scales; // K x d
    Vec alpha;  // K
    std::vector<double> elbo_trace;

    int components() const { return static_cast<int>(alpha.size()); }
    int dims() const { return static_cast<int>(means.cols()); }
};

inline constexpr double kVarianceFloor = 1e-8;

struct PriorResult {
    GmmPrior prior;
    std::vector<std::string> warnings;
};

/// Data-driven defaults: m = column mean, kappa = 1, nu = d,
/// W = per-dimension variance (floored), alpha = 1/K.
PriorResult default_prior(const Mat& Z, int K);

struct FitOptions {
    int max_iters = 500;
    double tol = 1e-6;             // relative ELBO change
    double monotone_slack = 1e-8;  // relative
    std::uint64_t seed = 0;
    // Restart 0 uses k-means labels, 1 radial distance shells, later ones random soft
    // labels; the best final ELBO is kept.
    int restarts = 4;
    // Optional N x K initial responsibilities (single run, restarts ignored).
    std::optional<Mat> init_responsibilities;
};

struct FitResult {
    GmmPosterior posterior;
    Mat responsibilities; // N x K
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

/// Coordinate-ascent mean-field VI. Throws NumericalError if the ELBO becomes
/// non-finite or decreases beyond the relative slack.
FitResult fit_vi(const Mat& Z, int K, const GmmPrior& prior, const FitOptions& opts = {});

/// Evidence lower bound of the variational state (posterior, responsibilities) for data Z.
double elbo(const Mat& Z, const GmmPosterior& post, const Mat& responsibilities);

enum class Predictive {
    StudentT, // exact posterior predictive
    PlugIn,   // Gaussian at the posterior-mean parameters
};

/// Log-softmax-normalized component log-probabilities for one embedding.
Vec posterior_predictive_logprobs(const Vec& z, const GmmPosterior& post, Predictive kind = Predictive::StudentT);

struct Assignment {
    int component = 0; // zero-based
    Vec log_probs;
};

/// argmax with ties to the lowest index.
int argmax_lowest(const Vec& scores);

Assignment classify(const Vec& z, const GmmPosterior& post, Predictive kind = Predictive::StudentT);

struct Partition {
    std::vector<std::vector<std::size_t>> members; // indices into the input, per component
    std::vector<int> labels;
    std::vector<std::string> warnings;
};

/// Groups items by label; reports empty components.
Partition partition_by_labels(const std::vector<int>& labels, int K);

/// Hard split of the rows of Z by predictive argmax.
Partition partition(const Mat& Z, const GmmPosterior& post, Predictive kind = Predictive::StudentT);

struct KMeansResult {
    Mat centroids; // K x d
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> objective_trace; // best restart, one entry per Lloyd iteration
    std::vector<std::string> warnings;
};

KMeansResult kmeans_fit(const Mat& Z, int K, int max_iters = 100, int restarts = 4, std::uint64_t seed = 0);

int nearest_centroid(const Vec& z, const Mat& centroids);

/// Shannon entropy in bits, 0 log 0 = 0.
double classification_entropy(const Vec& probs);

void save_posterior(const GmmPosterior& post, const std::filesystem::path& dir);
GmmPosterior load_posterior(const std::filesystem::path& dir);

} // namespace mixft::mixture
