#include "mixft/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"
#include "mixft/tensor_io.hpp"

namespace mixft::pipeline {
namespace {

constexpr std::uint64_t kRouterSeedTag = 1;
constexpr std::uint64_t kAdapterInitTag = 100;
constexpr std::uint64_t kAdapterTrainTag = 200;

std::vector<series::Window> all_windows(const std::vector<series::Corpus>& corpora, const series::WindowSpec& spec) {
    std::vector<series::Window> out;
    for (const auto& c : corpora) {
        auto w = series::window_corpus(c, spec);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

Mat embed_windows(const model::BaseModel& base, const std::vector<series::Window>& windows) {
    Mat Z(static_cast<Eigen::Index>(windows.size()), base.config.hidden);
    parallel_for(windows.size(), [&](std::size_t i) {
        Z.row(static_cast<Eigen::Index>(i)) = model::embed(base, as_span(windows[i].context)).transpose();
    });
    return Z;
}

// share: this adapter's fraction of all fine-tuning windows
lora::LoraModule train_one(const model::BaseModel& base, const FinetuneConfig& cfg, std::uint64_t slot, double share,
                           const std::vector<series::Window>& data, const std::vector<series::Window>& replay,
                           std::vector<std::string>& warnings, const std::string& label) {
    auto acfg = cfg.adapter;
    acfg.seed = derive_seed(cfg.seed, kAdapterInitTag + slot);
    auto topts = cfg.train;
    topts.seed = derive_seed(cfg.seed, kAdapterTrainTag + slot);
    if (cfg.budget == StepBudget::Proportional) {
        topts.optimizer.steps = std::max(1, static_cast<int>(std::lround(cfg.train.optimizer.steps * share)));
    }
    auto res = lora::train_lora(base, lora::init_lora(base, acfg), data, replay, topts);
    for (const auto& w : res.warnings) {
        warnings.push_back(label + ": " + w);
    }
    return std::move(res.module);
}

std::vector<std::string> dataset_ids(const std::vector<series::Corpus>& corpora) {
    std::vector<std::string> ids;
    for (const auto& c : corpora) {
        ids.push_back(c.id);
    }
    return ids;
}

nlohmann::json window_json(const series::WindowSpec& w) {
    return {{"context", w.context}, {"horizon", w.horizon}, {"stride", w.stride}};
}

std::string predictive_name(mixture::Predictive p) {
    return p == mixture::Predictive::StudentT ? "student_t" : "plugin";
}

std::string averaging_name(lora::AveragingLevel a) { return a == lora::AveragingLevel::Factor ? "factor" : "delta"; }

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("missing file: " + path.string());
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

} // namespace

std::string to_string(PartitionerKind k) {
    switch (k) {
    case PartitionerKind::VI:
        return "vi";
    case PartitionerKind::KMeans:
        return "kmeans";
    case PartitionerKind::PerDataset:
        return "per_dataset";
    }
    return "vi";
}

std::string to_string(RoutingMode m) {
    switch (m) {
    case RoutingMode::Hard:
        return "hard";
    case RoutingMode::Soft:
        return "soft";
    case RoutingMode::Ensemble:
        return "ensemble";
    case RoutingMode::Mu:
        return "mu";
    }
    return "hard";
}

std::string to_string(StepBudget b) { return b == StepBudget::Proportional ? "proportional" : "per_adapter"; }

StepBudget parse_budget(const std::string& s) {
    if (s == "proportional") {
        return StepBudget::Proportional;
    }
    if (s == "per_adapter") {
        return StepBudget::PerAdapter;
    }
    throw ConfigError("unknown step budget '" + s + "' (expected proportional | per_adapter)");
}

PartitionerKind parse_partitioner(const std::string& s) {
    if (s == "vi") {
        return PartitionerKind::VI;
    }
    if (s == "kmeans") {
        return PartitionerKind::KMeans;
    }
    if (s == "per_dataset") {
        return PartitionerKind::PerDataset;
    }
    throw ConfigError("unknown partitioner '" + s + "' (expected vi | kmeans)");
}

RoutingMode parse_routing(const std::string& s) {
    if (s == "hard") {
        return RoutingMode::Hard;
    }
    if (s == "soft") {
        return RoutingMode::Soft;
    }
    if (s == "ensemble") {
        return RoutingMode::Ensemble;
    }
    if (s == "mu") {
        return RoutingMode::Mu;
    }
    throw ConfigError("unknown routing mode '" + s + "' (expected hard | soft | ensemble | mu)");
}

FinetuneResult finetune(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                        const FinetuneConfig& cfg, const std::vector<series::Window>& replay) {
    if (cfg.K < 1) {
        throw ConfigError("K must be >= 1");
    }
    if (corpora.empty()) {
        throw DataError("finetune needs at least one corpus");
    }
    if (cfg.partitioner == PartitionerKind::PerDataset) {
        return per_dataset_baseline(corpora, base, cfg, replay);
    }
    const auto windows = all_windows(corpora, cfg.window);
    if (windows.empty()) {
        throw DataError("fine-tuning corpora produced no windows");
    }
    const Mat Z = embed_windows(base, windows);

    FinetuneResult res;
    auto& art = res.artifact;
    art.base = base;
    art.partitioner = cfg.partitioner;
    art.predictive = cfg.predictive;
    art.averaging = cfg.averaging;
    art.seed = cfg.seed;
    art.window = cfg.window;
    art.datasets = dataset_ids(corpora);

    mixture::Partition part;
    if (cfg.partitioner == PartitionerKind::VI) {
        auto pr = mixture::default_prior(Z, cfg.K);
        res.warnings.insert(res.warnings.end(), pr.warnings.begin(), pr.warnings.end());
        auto opts = cfg.vi;
        opts.seed = derive_seed(cfg.seed, kRouterSeedTag);
        auto fit = mixture::fit_vi(Z, cfg.K, pr.prior, opts);
        res.warnings.insert(res.warnings.end(), fit.warnings.begin(), fit.warnings.end());
        art.posterior = std::move(fit.posterior);
        part = mixture::partition(Z, *art.posterior, cfg.predictive);
    } else {
        auto km = mixture::kmeans_fit(Z, cfg.K, 100, cfg.kmeans_restarts, derive_seed(cfg.seed, kRouterSeedTag));
        res.warnings.insert(res.warnings.end(), km.warnings.begin(), km.warnings.end());
        art.centroids = km.centroids;
        part = mixture::partition_by_labels(km.labels, cfg.K);
    }
    res.labels = part.labels;
    for (int k = 0; k < cfg.K; ++k) {
        const auto& members = part.members[static_cast<std::size_t>(k)];
        if (members.empty()) {
            throw DataError("sub-domain " + std::to_string(k) + " received no windows; reduce K (currently " +
                            std::to_string(cfg.K) + ")");
        }
        art.partition_sizes.push_back(members.size());
    }
    for (int k = 0; k < cfg.K; ++k) {
        std::vector<series::Window> data;
        for (auto i : part.members[static_cast<std::size_t>(k)]) {
            data.push_back(windows[i]);
        }
        const double share = static_cast<double>(data.size()) / static_cast<double>(windows.size());
        art.adapters.push_back(train_one(base, cfg, static_cast<std::uint64_t>(k), share, data, replay, res.warnings,
                                         "adapter " + std::to_string(k)));
        art.adapter_labels.push_back("subdomain_" + std::to_string(k));
    }
    return res;
}

FinetuneResult per_dataset_baseline(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                                    const FinetuneConfig& cfg, const std::vector<series::Window>& replay,
                                    bool shared_seeds) {
    if (corpora.empty()) {
        throw DataError("per-dataset baseline needs at least one corpus");
    }
    FinetuneResult res;
    auto& art = res.artifact;
    art.base = base;
    art.partitioner = PartitionerKind::PerDataset;
    art.predictive = cfg.predictive;
    art.averaging = cfg.averaging;
    art.seed = cfg.seed;
    art.window = cfg.window;
    art.datasets = dataset_ids(corpora);
    std::vector<std::vector<series::Window>> per_dataset;
    std::size_t total = 0;
    for (const auto& c : corpora) {
        per_dataset.push_back(series::window_corpus(c, cfg.window));
        total += per_dataset.back().size();
    }
    for (std::size_t m = 0; m < corpora.size(); ++m) {
        const auto& data = per_dataset[m];
        if (data.empty()) {
            res.warnings.push_back("dataset '" + corpora[m].id + "' has no windows; skipped");
            continue;
        }
        art.partition_sizes.push_back(data.size());
        res.labels.insert(res.labels.end(), data.size(), static_cast<int>(art.adapters.size()));
        const double share = static_cast<double>(data.size()) / static_cast<double>(total);
        art.adapters.push_back(train_one(base, cfg, shared_seeds ? 0 : m, share, data, replay, res.warnings,
                                         "dataset " + corpora[m].id));
        art.adapter_labels.push_back(corpora[m].id);
    }
    if (art.adapters.empty()) {
        throw DataError("no dataset produced any windows");
    }
    return res;
}

Vec routing_probabilities(const MixftArtifact& artifact, std::span<const double> context) {
    const int K = artifact.K();
    switch (artifact.partitioner) {
    case PartitionerKind::VI: {
        const Vec z = model::embed(artifact.base, context);
        return mixture::posterior_predictive_logprobs(z, *artifact.posterior, artifact.predictive).array().exp();
    }
    case PartitionerKind::KMeans: {
        const Vec z = model::embed(artifact.base, context);
        Vec p = Vec::Zero(K);
        p(mixture::nearest_centroid(z, artifact.centroids)) = 1.0;
        return p;
    }
    case PartitionerKind::PerDataset:
        break;
    }
    return Vec::Constant(K, 1.0 / K);
}

Vec base_forecast(const MixftArtifact& artifact, std::span<const double> context) {
    return model::forward(artifact.base, nullptr, context).forecast;
}

ForecastResult forecast(const MixftArtifact& artifact, std::span<const double> context, RoutingMode mode) {
    if (artifact.adapters.empty()) {
        throw ConfigError("artifact has no adapters");
    }
    if (artifact.partitioner == PartitionerKind::PerDataset && mode != RoutingMode::Mu) {
        throw ConfigError("per-dataset artifacts only support mu routing");
    }
    ForecastResult res;
    res.probabilities = routing_probabilities(artifact, context);
    res.chosen = mixture::argmax_lowest(res.probabilities);
    res.entropy_bits = mixture::classification_entropy(res.probabilities);
    const int K = artifact.K();
    const std::vector<double> probs(res.probabilities.data(), res.probabilities.data() + K);

    switch (mode) {
    case RoutingMode::Hard:
        res.forecast = model::forward(artifact.base, &artifact.adapters[static_cast<std::size_t>(res.chosen)], context).forecast;
        res.adapter_evaluations = 1;
        break;
    case RoutingMode::Soft: {
        const auto merged = lora::average_loras(artifact.adapters, probs, artifact.averaging);
        res.forecast = model::forward(artifact.base, &merged, context).forecast;
        res.adapter_evaluations = 1;
        break;
    }
    case RoutingMode::Mu: {
        const auto merged =
            lora::average_loras(artifact.adapters, std::vector<double>(static_cast<std::size_t>(K), 1.0 / K), artifact.averaging);
        res.forecast = model::forward(artifact.base, &merged, context).forecast;
        res.adapter_evaluations = 1;
        break;
    }
    case RoutingMode::Ensemble: {
        // identical adapters share one forward so degenerate cases reduce exactly
        std::vector<std::size_t> distinct;
        std::vector<double> weight;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (probs[k] == 0.0) {
                continue;
            }
            bool merged = false;
            for (std::size_t d = 0; d < distinct.size(); ++d) {
                if (lora::bitwise_equal(artifact.adapters[distinct[d]], artifact.adapters[k])) {
                    weight[d] += probs[k];
                    merged = true;
                    break;
                }
            }
            if (!merged) {
                distinct.push_back(k);
                weight.push_back(probs[k]);
            }
        }
        if (distinct.size() == 1) {
            res.forecast = model::forward(artifact.base, &artifact.adapters[distinct[0]], context).forecast;
        } else {
            res.forecast = Vec::Zero(artifact.base.config.horizon);
            for (std::size_t d = 0; d < distinct.size(); ++d) {
                res.forecast += weight[d] * model::forward(artifact.base, &artifact.adapters[distinct[d]], context).forecast;
            }
        }
        res.adapter_evaluations = static_cast<int>(distinct.size());
        break;
    }
    }
    return res;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("model checkpoint directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::string digest_list;
    for (const auto& f : files) {
        digest_list += f.filename().string() + ":" + io::sha256_file(f) + "\n";
    }
    return io::sha256_text(digest_list);
}

void save_artifact(const MixftArtifact& artifact, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "mixft-artifact/1";
    manifest["K"] = artifact.K();
    manifest["partitioner"] = to_string(artifact.partitioner);
    manifest["predictive"] = predictive_name(artifact.predictive);
    manifest["averaging"] = averaging_name(artifact.averaging);
    manifest["seed"] = artifact.seed;
    manifest["window"] = window_json(artifact.window);
    manifest["datasets"] = artifact.datasets;
    manifest["adapter_labels"] = artifact.adapter_labels;
    manifest["partition_sizes"] = artifact.partition_sizes;
    if (!artifact.adapters.empty()) {
        const auto& c = artifact.adapters.front().config;
        manifest["adapter"] = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}};
    }

    const auto gmm = dir / "gmm";
    std::filesystem::create_directories(gmm);
    nlohmann::json gmm_manifest;
    gmm_manifest["kind"] = to_string(artifact.partitioner);
    if (artifact.partitioner == PartitionerKind::VI) {
        mixture::save_posterior(*artifact.posterior, gmm);
    } else {
        if (artifact.partitioner == PartitionerKind::KMeans) {
            io::write_tensor(gmm / "centroids.mxt", io::from_matrix(artifact.centroids));
        }
        std::ofstream(gmm / "manifest.json", std::ios::trunc) << gmm_manifest.dump(2) << '\n';
    }
    for (std::size_t k = 0; k < artifact.adapters.size(); ++k) {
        lora::save_adapter(artifact.adapters[k], dir / ("adapter_" + std::to_string(k)));
    }
    const auto base_dir = dir / "base_model";
    std::filesystem::create_directories(base_dir);
    nlohmann::json ref = {{"path", artifact.base_model_path}, {"hash", artifact.base_model_hash}};
    std::ofstream(base_dir / "reference.json", std::ios::trunc) << ref.dump(2) << '\n';
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

MixftArtifact load_artifact(const std::filesystem::path& dir) {
    const auto manifest = read_json(dir / "manifest.json");
    const auto ref = read_json(dir / "base_model" / "reference.json");
    MixftArtifact art;
    art.base_model_path = ref.at("path").get<std::string>();
    art.base_model_hash = ref.at("hash").get<std::string>();
    if (art.base_model_path.empty()) {
        throw DataError("artifact " + dir.string() + " does not reference a base model checkpoint");
    }
    const auto actual = checkpoint_hash(art.base_model_path);
    if (!art.base_model_hash.empty() && actual != art.base_model_hash) {
        throw DataError("base model at " + art.base_model_path + " does not match the hash recorded in the artifact");
    }
    art.base = model::load_model(art.base_model_path);
    art.partitioner = parse_partitioner(manifest.at("partitioner"));
    art.predictive = manifest.at("predictive") == "plugin" ? mixture::Predictive::PlugIn : mixture::Predictive::StudentT;
    art.averaging = manifest.at("averaging") == "delta" ? lora::AveragingLevel::Delta : lora::AveragingLevel::Factor;
    art.seed = manifest.at("seed");
    art.window.context = manifest.at("window").at("context");
    art.window.horizon = manifest.at("window").at("horizon");
    art.window.stride = manifest.at("window").at("stride");
    art.datasets = manifest.at("datasets").get<std::vector<std::string>>();
    art.adapter_labels = manifest.at("adapter_labels").get<std::vector<std::string>>();
    art.partition_sizes = manifest.at("partition_sizes").get<std::vector<std::size_t>>();
    const int K = manifest.at("K");
    if (art.partitioner == PartitionerKind::VI) {
        art.posterior = mixture::load_posterior(dir / "gmm");
        if (art.posterior->components() != K) {
            throw DataError("artifact posterior has " + std::to_string(art.posterior->components()) +
                            " components but K = " + std::to_string(K));
        }
    } else if (art.partitioner == PartitionerKind::KMeans) {
        art.centroids = io::to_matrix(io::read_tensor(dir / "gmm" / "centroids.mxt"));
    }
    for (int k = 0; k < K; ++k) {
        art.adapters.push_back(lora::load_adapter(dir / ("adapter_" + std::to_string(k))));
    }
    return art;
}

SelectKResult select_k_from_scores(const std::vector<int>& candidates, const std::vector<std::string>& datasets,
                                   const Mat& scores) {
    if (candidates.empty()) {
        throw ConfigError("select_k needs at least one candidate K");
    }
    std::vector<std::string> names;
    for (int k : candidates) {
        names.push_back("K=" + std::to_string(k));
    }
    SelectKResult res;
    res.candidates = candidates;
    res.table = eval::average_rank(datasets, names, scores);
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double a = res.table.average(static_cast<Eigen::Index>(i));
        const double b = res.table.average(static_cast<Eigen::Index>(best));
        if (a < b || (a == b && candidates[i] < candidates[best])) {
            best = i;
        }
    }
    res.chosen = candidates[best];
    return res;
}

ValidationSplit split_for_validation(const std::vector<series::Corpus>& corpora, const series::WindowSpec& spec,
                                     double holdout) {
    ValidationSplit split;
    for (const auto& corpus : corpora) {
        series::Corpus train;
        train.id = corpus.id;
        std::vector<series::Window> val;
        for (const auto& s : corpus.series) {
            const auto T = s.length();
            const auto cut = static_cast<Eigen::Index>(std::floor(static_cast<double>(T) * (1.0 - holdout)));
            series::TimeSeries head = s;
            head.values = s.values.topRows(cut);
            series::TimeSeries tail = s;
            tail.values = s.values.bottomRows(T - cut);
            if (!s.regime_labels.empty()) {
                head.regime_labels.assign(s.regime_labels.begin(), s.regime_labels.begin() + cut);
                tail.regime_labels.assign(s.regime_labels.begin() + cut, s.regime_labels.end());
            }
            if (head.length() >= spec.context + spec.horizon) {
                train.series.push_back(std::move(head));
            }
            if (tail.length() >= spec.context + spec.horizon) {
                auto w = series::window(tail, spec, corpus.id);
                val.insert(val.end(), w.begin(), w.end());
            }
        }
        if (val.empty()) {
            split.warnings.push_back("dataset '" + corpus.id + "' is too short for a validation window; excluded from validation");
        } else {
            split.validation.push_back(std::move(val));
        }
        split.train.push_back(std::move(train));
    }
    return split;
}

SelectKResult select_k(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                       const std::vector<int>& candidates, const FinetuneConfig& cfg,
                       const std::vector<series::Window>& replay) {
    if (candidates.empty()) {
        throw ConfigError("select_k needs at least one candidate K");
    }
    auto split = split_for_validation(corpora, cfg.window);
    if (split.validation.empty()) {
        throw DataError("no dataset is long enough to hold out validation windows");
    }
    std::vector<std::string> datasets;
    for (const auto& v : split.validation) {
        datasets.push_back(v.front().dataset_id);
    }
    Mat scores(static_cast<Eigen::Index>(datasets.size()), static_cast<Eigen::Index>(candidates.size()));
    std::vector<std::string> warnings = split.warnings;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        auto kcfg = cfg;
        kcfg.K = candidates[c];
        try {
            auto ft = finetune(split.train, base, kcfg, replay);
            for (std::size_t d = 0; d < split.validation.size(); ++d) {
                scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)) =
                    evaluate_windows(ft.artifact, split.validation[d], RoutingMode::Hard).mean;
            }
        } catch (const DataError& e) {
            warnings.push_back("K=" + std::to_string(candidates[c]) + " failed (" + e.what() + "); ranked last");
            scores.col(static_cast<Eigen::Index>(c)).setConstant(std::numeric_limits<double>::infinity());
        }
    }
    auto res = select_k_from_scores(candidates, datasets, scores);
    res.warnings = std::move(warnings);
    return res;
}

eval::Summary evaluate_windows(const MixftArtifact& artifact, const std::vector<series::Window>& windows,
                               RoutingMode mode) {
    std::vector<std::optional<double>> values(windows.size());
    parallel_for(windows.size(), [&](std::size_t i) {
        const auto& w = windows[i];
        const auto f = forecast(artifact, as_span(w.context), mode);
        values[i] = eval::mase(as_span(f.forecast), as_span(w.target), as_span(w.context), w.seasonality);
    });
    return eval::summarize(values);
}

eval::Summary evaluate_base(const model::BaseModel& base, const std::vector<series::Window>& windows) {
    std::vector<std::optional<double>> values(windows.size());
    parallel_for(windows.size(), [&](std::size_t i) {
        const auto& w = windows[i];
        const auto f = model::forward(base, nullptr, as_span(w.context)).forecast;
        values[i] = eval::mase(as_span(f), as_span(w.target), as_span(w.context), w.seasonality);
    });
    return eval::summarize(values);
}

} // namespace mixft::pipeline
