#include "mixft/mixture.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"
#include "mixft/tensor_io.hpp"

namespace mixft::mixture {
namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112; // ln(2 pi)
constexpr double kDegenerateMass = 1e-6;

double digamma(double x) { return boost::math::digamma(x); }

double log_dirichlet_norm(const Vec& alpha) {
    double s = std::lgamma(alpha.sum());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        s -= std::lgamma(alpha(k));
    }
    return s;
}

double log_sum_exp(const Vec& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) {
        return mx;
    }
    return mx + std::log((v.array() - mx).exp().sum());
}

// Sufficient statistics for one component under responsibilities r.
struct Stats {
    Vec counts; // N_k
    Mat means;  // z-bar
    Mat scatter; // S_k, per dimension
};

Stats sufficient_stats(const Mat& Z, const Mat& R) {
    const auto N = Z.rows();
    const auto d = Z.cols();
    const auto K = R.cols();
    Stats s;
    s.counts = Vec::Zero(K);
    s.means = Mat::Zero(K, d);
    s.scatter = Mat::Zero(K, d);
    for (Eigen::Index n = 0; n < N; ++n) {
        for (Eigen::Index k = 0; k < K; ++k) {
            s.counts(k) += R(n, k);
            s.means.row(k) += R(n, k) * Z.row(n);
        }
    }
    for (Eigen::Index k = 0; k < K; ++k) {
        if (s.counts(k) > 0.0) {
            s.means.row(k) /= s.counts(k);
        }
    }
    for (Eigen::Index n = 0; n < N; ++n) {
        for (Eigen::Index k = 0; k < K; ++k) {
            s.scatter.row(k) += R(n, k) * (Z.row(n) - s.means.row(k)).array().square().matrix();
        }
    }
    return s;
}

GmmPosterior m_step(const Mat& Z, const Mat& R, const GmmPrior& prior) {
    const auto K = R.cols();
    const auto st = sufficient_stats(Z, R);
    GmmPosterior post;
    post.prior = prior;
    post.alpha = prior.alpha + st.counts;
    post.kappa = prior.kappa + st.counts.array();
    post.nu = prior.nu + st.counts.array();
    post.means.resize(K, Z.cols());
    post.scales.resize(K, Z.cols());
    for (Eigen::Index k = 0; k < K; ++k) {
        const double nk = st.counts(k);
        post.means.row(k) = (prior.kappa * prior.mean.transpose() + nk * st.means.row(k)) / post.kappa(k);
        const Eigen::RowVectorXd diff = st.means.row(k) - prior.mean.transpose();
        post.scales.row(k) = prior.scale.transpose() + st.scatter.row(k) +
                             (prior.kappa * nk / post.kappa(k)) * diff.array().square().matrix();
    }
    return post;
}

Mat e_step(const Mat& Z, const GmmPosterior& post) {
    const auto N = Z.rows();
    const auto K = post.components();
    const auto d = post.dims();
    const double dig_total = digamma(post.alpha.sum());
    Vec log_pi(K);
    Vec const_term(K);
    Mat precision(K, d);
    for (int k = 0; k < K; ++k) {
        log_pi(k) = digamma(post.alpha(k)) - dig_total;
        const double dig_nu = digamma(post.nu(k) / 2.0);
        double c = 0.0;
        for (int j = 0; j < d; ++j) {
            c += dig_nu - std::log(post.scales(k, j) / 2.0) - kLn2Pi - 1.0 / post.kappa(k);
            precision(k, j) = post.nu(k) / post.scales(k, j);
        }
        const_term(k) = log_pi(k) + 0.5 * c;
    }
    Mat R(N, K);
    parallel_for(static_cast<std::size_t>(N), [&](std::size_t i) {
        const auto n = static_cast<Eigen::Index>(i);
        Vec lr(K);
        for (int k = 0; k < K; ++k) {
            const double quad =
                (precision.row(k).array() * (Z.row(n) - post.means.row(k)).array().square()).sum();
            lr(k) = const_term(k) - 0.5 * quad;
        }
        const double lse = log_sum_exp(lr);
        R.row(n) = (lr.array() - lse).exp().transpose();
    });
    return R;
}

Mat one_hot(const std::vector<int>& labels, int K) {
    Mat R = Mat::Zero(static_cast<Eigen::Index>(labels.size()), K);
    for (std::size_t n = 0; n < labels.size(); ++n) {
        R(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
    }
    return R;
}

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    return (a - b).squaredNorm();
}

} // namespace

void GmmPrior::validate() const {
    if (mean.size() == 0 || scale.size() != mean.size()) {
        throw ConfigError("prior mean and scale must be nonempty and the same length");
    }
    if (!(kappa > 0.0) || !(nu >= 1.0)) {
        throw ConfigError("prior requires kappa > 0 and nu >= 1");
    }
    if ((scale.array() <= 0.0).any() || alpha.size() == 0 || (alpha.array() <= 0.0).any()) {
        throw ConfigError("prior scale and alpha entries must be positive");
    }
}

PriorResult default_prior(const Mat& Z, int K) {
    if (Z.rows() < 2) {
        throw DataError("default prior needs at least two embeddings");
    }
    if (K < 1) {
        throw ConfigError("number of components must be >= 1");
    }
    PriorResult res;
    auto& p = res.prior;
    const auto d = Z.cols();
    p.mean = Z.colwise().mean().transpose();
    p.kappa = 1.0;
    p.nu = static_cast<double>(d);
    // population covariance diagonal
    p.scale = (Z.rowwise() - p.mean.transpose()).array().square().colwise().mean().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(p.scale(j) >= kVarianceFloor)) {
            p.scale(j) = kVarianceFloor;
            res.warnings.push_back("embedding dimension " + std::to_string(j) + " has (near) zero variance; floored");
        }
    }
    p.alpha = Vec::Constant(K, 1.0 / K);
    return res;
}

double elbo(const Mat& Z, const GmmPosterior& post, const Mat& R) {
    const auto& prior = post.prior;
    const int K = post.components();
    const int d = post.dims();
    const double dig_total = digamma(post.alpha.sum());
    Vec elog_pi(K);
    for (int k = 0; k < K; ++k) {
        elog_pi(k) = digamma(post.alpha(k)) - dig_total;
    }
    const Vec counts = R.colwise().sum().transpose();

    double lik = 0.0;
    double mean_prec = 0.0;
    double q_mean_prec = 0.0;
    const double a0 = prior.nu / 2.0;
    for (int k = 0; k < K; ++k) {
        const double ak = post.nu(k) / 2.0;
        const double dig_ak = digamma(ak);
        double lik_const = 0.0;
        for (int j = 0; j < d; ++j) {
            const double elnlam = dig_ak - std::log(post.scales(k, j) / 2.0);
            const double elam = post.nu(k) / post.scales(k, j);
            lik_const += 0.5 * (elnlam - kLn2Pi - 1.0 / post.kappa(k));

            // log p(mu | lambda) + log p(lambda) under q
            const double b0 = prior.scale(j) / 2.0;
            const double dm = post.means(k, j) - prior.mean(j);
            mean_prec += 0.5 * (std::log(prior.kappa) - kLn2Pi) + 0.5 * elnlam -
                         0.5 * prior.kappa * (elam * dm * dm + 1.0 / post.kappa(k));
            mean_prec += a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * elnlam - b0 * elam;

            // log q(mu | lambda) + log q(lambda)
            const double bk = post.scales(k, j) / 2.0;
            q_mean_prec += 0.5 * (std::log(post.kappa(k)) - kLn2Pi) + 0.5 * elnlam - 0.5;
            q_mean_prec += ak * std::log(bk) - std::lgamma(ak) + (ak - 1.0) * elnlam - ak;
        }
        double quad = 0.0;
        for (Eigen::Index n = 0; n < Z.rows(); ++n) {
            if (R(n, k) == 0.0) {
                continue;
            }
            double q = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = Z(n, j) - post.means(k, j);
                q += (post.nu(k) / post.scales(k, j)) * diff * diff;
            }
            quad += R(n, k) * q;
        }
        lik += counts(k) * lik_const - 0.5 * quad;
    }

    const double assign = counts.dot(elog_pi);
    const double p_pi = log_dirichlet_norm(prior.alpha) + (prior.alpha.array() - 1.0).matrix().dot(elog_pi);
    const double q_pi = log_dirichlet_norm(post.alpha) + (post.alpha.array() - 1.0).matrix().dot(elog_pi);
    double q_c = 0.0;
    for (Eigen::Index i = 0; i < R.size(); ++i) {
        const double r = R.data()[i];
        if (r > 0.0) {
            q_c += r * std::log(r);
        }
    }
    return lik + assign + p_pi + mean_prec - q_c - q_pi - q_mean_prec;
}

namespace {

FitResult run_vi(const Mat& Z, int K, const GmmPrior& prior, const FitOptions& opts, Mat R) {
    FitResult res;
    auto post = m_step(Z, R, prior);
    double prev = elbo(Z, post, R);
    if (!std::isfinite(prev)) {
        throw NumericalError("ELBO is non-finite at initialization");
    }
    post.elbo_trace.push_back(prev);
    for (int it = 1; it <= opts.max_iters; ++it) {
        R = e_step(Z, post);
        auto next = m_step(Z, R, prior);
        const double cur = elbo(Z, next, R);
        if (!std::isfinite(cur)) {
            throw NumericalError("ELBO became non-finite at iteration " + std::to_string(it));
        }
        if (cur < prev - opts.monotone_slack * std::abs(prev)) {
            throw NumericalError("ELBO decreased at iteration " + std::to_string(it) + " (" + format_double(prev) +
                                 " -> " + format_double(cur) + ")");
        }
        next.elbo_trace = std::move(post.elbo_trace);
        next.elbo_trace.push_back(cur);
        post = std::move(next);
        res.iterations = it;
        if (std::abs(cur - prev) < opts.tol * std::abs(prev)) {
            res.converged = true;
            break;
        }
        prev = cur;
    }
    res.posterior = std::move(post);
    res.responsibilities = std::move(R);
    return res;
}

// Rows drawn uniformly from the simplex.
Mat random_responsibilities(Eigen::Index n, int K, std::uint64_t seed) {
    Rng rng(seed);
    std::exponential_distribution<double> e(1.0);
    Mat R(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) {
            R(i, k) = e(rng);
        }
        R.row(i) /= R.row(i).sum();
    }
    return R;
}

// Hard labels by quantile shells of standardized distance from the data mean.
// Gives restarts a start where components differ in spread rather than location.
Mat radial_responsibilities(const Mat& Z, int K) {
    const Vec mean = Z.colwise().mean().transpose();
    const Vec var = ((Z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose()).max(kVarianceFloor);
    const auto n = Z.rows();
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        dist[static_cast<std::size_t>(i)] = {((Z.row(i).transpose() - mean).array().square() / var.array()).sum(), i};
    }
    std::stable_sort(dist.begin(), dist.end());
    Mat R = Mat::Zero(n, K);
    for (std::size_t j = 0; j < dist.size(); ++j) {
        R(dist[j].second, static_cast<Eigen::Index>(j * static_cast<std::size_t>(K) / dist.size())) = 1.0;
    }
    return R;
}

} // namespace

FitResult fit_vi(const Mat& Z, int K, const GmmPrior& prior, const FitOptions& opts) {
    if (!(opts.tol > 0.0)) {
        throw ConfigError("VI tolerance must be positive");
    }
    if (opts.max_iters < 1) {
        throw ConfigError("VI max_iters must be >= 1");
    }
    if (opts.restarts < 1) {
        throw ConfigError("VI restarts must be >= 1");
    }
    if (K < 1 || Z.rows() <= K) {
        throw DataError("fit_vi needs more points (" + std::to_string(Z.rows()) + ") than components (" +
                        std::to_string(K) + ")");
    }
    prior.validate();
    if (prior.dims() != Z.cols() || prior.components() != K) {
        throw ConfigError("prior dimensions do not match data / K");
    }
    FitResult res;
    if (opts.init_responsibilities) {
        const Mat& R = *opts.init_responsibilities;
        if (R.rows() != Z.rows() || R.cols() != K) {
            throw ConfigError("initial responsibilities must be N x K");
        }
        res = run_vi(Z, K, prior, opts, R);
    } else {
        // restart 0: k-means labels, 1: radial shells, then random soft labels.
        // The highest final ELBO wins, earliest restart on ties.
        for (int r = 0; r < opts.restarts; ++r) {
            Mat R = r == 0   ? one_hot(kmeans_fit(Z, K, 100, 4, opts.seed).labels, K)
                    : r == 1 ? radial_responsibilities(Z, K)
                             : random_responsibilities(Z.rows(), K, derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
            auto run = run_vi(Z, K, prior, opts, std::move(R));
            if (r == 0 || run.posterior.elbo_trace.back() > res.posterior.elbo_trace.back()) {
                res = std::move(run);
            }
        }
    }
    const Vec counts = res.responsibilities.colwise().sum().transpose();
    for (int k = 0; k < K; ++k) {
        if (counts(k) < kDegenerateMass) {
            res.warnings.push_back("component " + std::to_string(k) + " has no responsibility mass; it stays at the prior");
        }
    }
    if (!res.converged) {
        res.warnings.push_back("VI did not converge within " + std::to_string(opts.max_iters) + " iterations");
    }
    return res;
}

Vec posterior_predictive_logprobs(const Vec& z, const GmmPosterior& post, Predictive kind) {
    const int K = post.components();
    const int d = post.dims();
    if (z.size() != d) {
        throw DataError("embedding length " + std::to_string(z.size()) + " does not match posterior dimension " +
                        std::to_string(d));
    }
    const double log_total = std::log(post.alpha.sum());
    Vec scores(K);
    for (int k = 0; k < K; ++k) {
        double s = std::log(post.alpha(k)) - log_total;
        const double nu = post.nu(k);
        const double kap = post.kappa(k);
        if (kind == Predictive::StudentT) {
            const double norm = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi);
            for (int j = 0; j < d; ++j) {
                const double scale2 = post.scales(k, j) * (kap + 1.0) / (kap * nu);
                const double diff = z(j) - post.means(k, j);
                s += norm - 0.5 * std::log(scale2) - 0.5 * (nu + 1.0) * std::log1p(diff * diff / (nu * scale2));
            }
        } else {
            for (int j = 0; j < d; ++j) {
                const double var = post.scales(k, j) / nu;
                const double diff = z(j) - post.means(k, j);
                s += -0.5 * (kLn2Pi + std::log(var) + diff * diff / var);
            }
        }
        scores(k) = s;
    }
    return (scores.array() - log_sum_exp(scores)).matrix();
}

int argmax_lowest(const Vec& scores) {
    int best = 0;
    for (Eigen::Index k = 1; k < scores.size(); ++k) {
        if (scores(k) > scores(best)) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

Assignment classify(const Vec& z, const GmmPosterior& post, Predictive kind) {
    Assignment a;
    a.log_probs = posterior_predictive_logprobs(z, post, kind);
    a.component = argmax_lowest(a.log_probs);
    return a;
}

Partition partition_by_labels(const std::vector<int>& labels, int K) {
    Partition p;
    p.labels = labels;
    p.members.resize(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= K) {
            throw DataError("label out of range in partition");
        }
        p.members[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (int k = 0; k < K; ++k) {
        if (p.members[static_cast<std::size_t>(k)].empty()) {
            p.warnings.push_back("component " + std::to_string(k) + " received no data; consider a smaller K");
        }
    }
    return p;
}

Partition partition(const Mat& Z, const GmmPosterior& post, Predictive kind) {
    std::vector<int> labels(static_cast<std::size_t>(Z.rows()));
    parallel_for(labels.size(), [&](std::size_t n) {
        labels[n] = classify(Z.row(static_cast<Eigen::Index>(n)).transpose(), post, kind).component;
    });
    return partition_by_labels(labels, post.components());
}

namespace {

struct LloydRun {
    Mat centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> trace;
    bool reseeded = false;
};

Mat kmeanspp_seed(const Mat& Z, int K, Rng& rng) {
    const auto N = Z.rows();
    Mat C(K, Z.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
    C.row(0) = Z.row(first(rng));
    Vec dist(N);
    for (Eigen::Index n = 0; n < N; ++n) {
        dist(n) = squared_distance(Z.row(n), C.row(0));
    }
    for (int k = 1; k < K; ++k) {
        const double total = dist.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            pick = N - 1;
            for (Eigen::Index n = 0; n < N; ++n) {
                r -= dist(n);
                if (r < 0.0) {
                    pick = n;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        C.row(k) = Z.row(pick);
        for (Eigen::Index n = 0; n < N; ++n) {
            dist(n) = std::min(dist(n), squared_distance(Z.row(n), C.row(k)));
        }
    }
    return C;
}

LloydRun lloyd(const Mat& Z, Mat C, int max_iters) {
    const auto N = Z.rows();
    const auto K = C.rows();
    LloydRun run;
    run.labels.assign(static_cast<std::size_t>(N), -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        double obj = 0.0;
        std::vector<double> point_cost(static_cast<std::size_t>(N));
        for (Eigen::Index n = 0; n < N; ++n) {
            int best = 0;
            double bd = squared_distance(Z.row(n), C.row(0));
            for (Eigen::Index k = 1; k < K; ++k) {
                const double dk = squared_distance(Z.row(n), C.row(k));
                if (dk < bd) {
                    bd = dk;
                    best = static_cast<int>(k);
                }
            }
            changed = changed || run.labels[static_cast<std::size_t>(n)] != best;
            run.labels[static_cast<std::size_t>(n)] = best;
            point_cost[static_cast<std::size_t>(n)] = bd;
            obj += bd;
        }
        run.trace.push_back(obj);
        run.inertia = obj;
        if (!changed && it > 0) {
            break;
        }
        Mat sums = Mat::Zero(K, Z.cols());
        Vec counts = Vec::Zero(K);
        for (Eigen::Index n = 0; n < N; ++n) {
            sums.row(run.labels[static_cast<std::size_t>(n)]) += Z.row(n);
            counts(run.labels[static_cast<std::size_t>(n)]) += 1.0;
        }
        for (Eigen::Index k = 0; k < K; ++k) {
            if (counts(k) > 0.0) {
                C.row(k) = sums.row(k) / counts(k);
            } else {
                // reseed at the point farthest from its centroid
                Eigen::Index far = 0;
                for (Eigen::Index n = 1; n < N; ++n) {
                    if (point_cost[static_cast<std::size_t>(n)] > point_cost[static_cast<std::size_t>(far)]) {
                        far = n;
                    }
                }
                C.row(k) = Z.row(far);
                point_cost[static_cast<std::size_t>(far)] = 0.0;
                run.reseeded = true;
            }
        }
    }
    run.centroids = std::move(C);
    return run;
}

} // namespace

KMeansResult kmeans_fit(const Mat& Z, int K, int max_iters, int restarts, std::uint64_t seed) {
    if (K < 1 || K > Z.rows()) {
        throw DataError("k-means needs 1 <= K <= N (K = " + std::to_string(K) + ", N = " + std::to_string(Z.rows()) + ")");
    }
    if (max_iters < 1 || restarts < 1) {
        throw ConfigError("k-means max_iters and restarts must be >= 1");
    }
    KMeansResult best;
    bool have = false;
    bool reseeded = false;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        auto run = lloyd(Z, kmeanspp_seed(Z, K, rng), max_iters);
        reseeded = reseeded || run.reseeded;
        if (!have || run.inertia < best.inertia) {
            best.centroids = std::move(run.centroids);
            best.labels = std::move(run.labels);
            best.inertia = run.inertia;
            best.objective_trace = std::move(run.trace);
            have = true;
        }
    }
    if (reseeded) {
        best.warnings.push_back("k-means reseeded an empty cluster at the farthest point");
    }
    return best;
}

int nearest_centroid(const Vec& z, const Mat& centroids) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
        const double dk = (centroids.row(k).transpose() - z).squaredNorm();
        if (dk < bd) {
            bd = dk;
            best = static_cast<int>(k);
        }
    }
    return best;
}

double classification_entropy(const Vec& probs) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        if (probs(k) > 0.0) {
            h -= probs(k) * std::log2(probs(k));
        }
    }
    return h;
}

void save_posterior(const GmmPosterior& post, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["K"] = post.components();
    manifest["d"] = post.dims();
    manifest["prior"] = {{"kappa", post.prior.kappa}, {"nu", post.prior.nu},
                         {"tensors", {"prior_mean.mxt", "prior_scale.mxt", "prior_alpha.mxt"}}};
    io::write_tensor(dir / "prior_mean.mxt", io::from_vector(post.prior.mean));
    io::write_tensor(dir / "prior_scale.mxt", io::from_vector(post.prior.scale));
    io::write_tensor(dir / "prior_alpha.mxt", io::from_vector(post.prior.alpha));
    io::write_tensor(dir / "m.mxt", io::from_matrix(post.means));
    io::write_tensor(dir / "kappa.mxt", io::from_vector(post.kappa));
    io::write_tensor(dir / "nu.mxt", io::from_vector(post.nu));
    io::write_tensor(dir / "W.mxt", io::from_matrix(post.scales));
    io::write_tensor(dir / "alpha.mxt", io::from_vector(post.alpha));
    io::write_tensor(dir / "elbo.mxt", io::from_values(post.elbo_trace));
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

GmmPosterior load_posterior(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw DataError("missing posterior manifest: " + (dir / "manifest.json").string());
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError((dir / "manifest.json").string() + ": " + e.what());
    }
    GmmPosterior post;
    post.prior.kappa = manifest.at("prior").at("kappa");
    post.prior.nu = manifest.at("prior").at("nu");
    post.prior.mean = io::to_vector(io::read_tensor(dir / "prior_mean.mxt"));
    post.prior.scale = io::to_vector(io::read_tensor(dir / "prior_scale.mxt"));
    post.prior.alpha = io::to_vector(io::read_tensor(dir / "prior_alpha.mxt"));
    post.means = io::to_matrix(io::read_tensor(dir / "m.mxt"));
    post.kappa = io::to_vector(io::read_tensor(dir / "kappa.mxt"));
    post.nu = io::to_vector(io::read_tensor(dir / "nu.mxt"));
    post.scales = io::to_matrix(io::read_tensor(dir / "W.mxt"));
    post.alpha = io::to_vector(io::read_tensor(dir / "alpha.mxt"));
    post.elbo_trace = io::read_tensor(dir / "elbo.mxt").data;
    if (post.components() != manifest.at("K").get<int>() || post.dims() != manifest.at("d").get<int>()) {
        throw DataError("posterior tensors disagree with manifest K / d");
    }
    return post;
}

} // namespace mixft::mixture
