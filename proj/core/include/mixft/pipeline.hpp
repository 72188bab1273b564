#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixft/basemodel.hpp"
#include "mixft/lowrank.hpp"
#include "mixft/metrics.hpp"
#include "mixft/mixture.hpp"
#include "mixft/series.hpp"

namespace mixft::pipeline {

enum class PartitionerKind {
    VI,         // Bayesian GMM, posterior-predictive routing
    KMeans,     // hard k-means, nearest-centroid routing
    PerDataset, // one adapter per dataset, mu routing only
};

enum class RoutingMode { Hard, Soft, Ensemble, Mu };

/// How the optimizer step count is spent across adapters.
enum class StepBudget {
    Proportional, // steps is the total; adapter k gets steps * |S_k| / N (equal epochs)
    PerAdapter,   // every adapter runs the full step count
};

std::string to_string(PartitionerKind k);
std::string to_string(StepBudget b);
StepBudget parse_budget(const std::string& s);
std::string to_string(RoutingMode m);
PartitionerKind parse_partitioner(const std::string& s);
RoutingMode parse_routing(const std::string& s);

struct FinetuneConfig {
    int K = 2;
    PartitionerKind partitioner = PartitionerKind::VI;
    series::WindowSpec window;
    lora::AdapterConfig adapter;
    lora::TrainOptions train;
    mixture::FitOptions vi;
    mixture::Predictive predictive = mixture::Predictive::StudentT;
    lora::AveragingLevel averaging = lora::AveragingLevel::Factor;
    StepBudget budget = StepBudget::Proportional;
    int kmeans_restarts = 4;
    std::uint64_t seed = 0;
};

/// Fitted router, adapters, and a reference to the frozen base checkpoint.
struct MixftArtifact {
    model::BaseModel base;
    std::string base_model_path;
    std::string base_model_hash;
    PartitionerKind partitioner = PartitionerKind::VI;
    mixture::Predictive predictive = mixture::Predictive::StudentT;
    lora::AveragingLevel averaging = lora::AveragingLevel::Factor;
    std::optional<mixture::GmmPosterior> posterior;
    Mat centroids;
    lora::AdapterSet adapters;
    std::vector<std::string> adapter_labels;
    std::vector<std::size_t> partition_sizes;
    std::vector<std::string> datasets;
    std::uint64_t seed = 0;
    series::WindowSpec window;

    int K() const { return static_cast<int>(adapters.size()); }
};

struct FinetuneResult {
    MixftArtifact artifact;
    std::vector<int> labels; // sub-domain per training window
    std::vector<std::string> warnings;
};

/// Embed every training window with the frozen base, fit the router on the
/// pooled embeddings, split windows by routed component, train one adapter each.
FinetuneResult finetune(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                        const FinetuneConfig& cfg, const std::vector<series::Window>& replay);

/// One adapter per dataset, combined by uniform averaging at forecast time.
FinetuneResult per_dataset_baseline(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                                    const FinetuneConfig& cfg, const std::vector<series::Window>& replay,
                                    bool shared_seeds = false);

struct ForecastResult {
    Vec forecast;
    Vec probabilities;
    int chosen = 0;
    double entropy_bits = 0.0;
    int adapter_evaluations = 0; // adapted forwards actually run
};

/// Routing probabilities for a context under the artifact's partitioner.
Vec routing_probabilities(const MixftArtifact& artifact, std::span<const double> context);

ForecastResult forecast(const MixftArtifact& artifact, std::span<const double> context, RoutingMode mode);

/// Base model with no adapter.
Vec base_forecast(const MixftArtifact& artifact, std::span<const double> context);

void save_artifact(const MixftArtifact& artifact, const std::filesystem::path& dir);
MixftArtifact load_artifact(const std::filesystem::path& dir);

/// Content hash of a model checkpoint directory (all files, sorted by name).
std::string checkpoint_hash(const std::filesystem::path& dir);

struct SelectKResult {
    int chosen = 0;
    std::vector<int> candidates;
    eval::RankTable table; // datasets x candidates (validation MASE)
    std::vector<std::string> warnings;
};

/// Ranks candidate K per dataset by score (lower better), averages the ranks,
/// and picks the lowest average; ties go to the smaller K.
SelectKResult select_k_from_scores(const std::vector<int>& candidates, const std::vector<std::string>& datasets,
                                   const Mat& scores);

struct ValidationSplit {
    std::vector<series::Corpus> train;
    std::vector<std::vector<series::Window>> validation; // per dataset
    std::vector<std::string> warnings;
};

/// First 90% of each series for training; windows lying entirely in the
/// last 10% for validation. Datasets without validation windows are dropped.
ValidationSplit split_for_validation(const std::vector<series::Corpus>& corpora, const series::WindowSpec& spec,
                                     double holdout = 0.1);

/// Validation-rank K selection. Candidates whose fine-tuning fails (empty
/// partition) are ranked last on every dataset.
SelectKResult select_k(const std::vector<series::Corpus>& corpora, const model::BaseModel& base,
                       const std::vector<int>& candidates, const FinetuneConfig& cfg,
                       const std::vector<series::Window>& replay);

/// Mean MASE of an artifact's forecasts over windows (undefined cases skipped).
eval::Summary evaluate_windows(const MixftArtifact& artifact, const std::vector<series::Window>& windows,
                               RoutingMode mode);
eval::Summary evaluate_base(const model::BaseModel& base, const std::vector<series::Window>& windows);

} // namespace mixft::pipeline
