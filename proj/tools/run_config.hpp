#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixft/basemodel.hpp"
#include "mixft/pipeline.hpp"
#include "mixft/scenario.hpp"

namespace mixft::cli {

/// Everything a command needs. Stored on disk as a flat `section.key = value`
/// text file; see serialize().
struct RunConfig {
    std::string profile = "desk";

    series::WindowSpec window;
    model::ModelConfig model;
    model::OptimizerConfig pretrain;
    lora::AdapterConfig adapter;
    model::OptimizerConfig optim;
    pipeline::StepBudget budget = pipeline::StepBudget::Proportional;
    bool mixup = true;
    double mixup_beta = 0.2;

    int K = 2;
    std::vector<int> candidates{1, 2, 3, 4};
    std::vector<int> sweep{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    pipeline::PartitionerKind partitioner = pipeline::PartitionerKind::VI;
    mixture::Predictive predictive = mixture::Predictive::StudentT;
    int vi_max_iters = 500;
    double vi_tol = 1e-6;
    int vi_restarts = 4;
    int kmeans_restarts = 4;

    pipeline::RoutingMode routing = pipeline::RoutingMode::Hard;
    lora::AveragingLevel averaging = lora::AveragingLevel::Factor;

    std::vector<std::uint64_t> seeds{0, 1, 2};
    int threads = 1;

    scenario::TwoRegimeConfig synth;
    int data_seasonality = 0; // for dataset dirs of raw CSVs; 0 = not set

    std::string corpus_dir = "work/corpus";
    std::string model_dir = "work/model";
    std::string artifact_dir = "work/artifact";
    std::string report_dir = "work/report";
};

/// Defaults for a named profile: "desk" or "paper-parity".
RunConfig profile_defaults(const std::string& profile);

/// Every accepted key, in serialization order.
std::vector<std::string> valid_keys();

/// Sets one key from its text form. Unknown keys and malformed values throw ConfigError.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_value(const RunConfig& cfg, const std::string& key);

/// Parses config text. A `profile` line (or an override of it) selects the
/// defaults; the remaining lines are then applied in order, then overrides.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// All keys, one `key = value` line each. parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

/// Derived library configs.
pipeline::FinetuneConfig finetune_config(const RunConfig& cfg, std::uint64_t seed);
model::ModelConfig model_config(const RunConfig& cfg, std::uint64_t seed);
scenario::TwoRegimeConfig scenario_config(const RunConfig& cfg, std::uint64_t seed);

} // namespace mixft::cli
