#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixft/adapter.hpp"
#include "mixft/basemodel.hpp"
#include "mixft/series.hpp"

namespace mixft::lora {

/// Fresh adapter for every block map and the head: A has orthonormal rows
/// drawn from an orthonormalized Gaussian, B is zero.
LoraModule init_lora(const model::BaseModel& model, const AdapterConfig& cfg);

struct TrainOptions {
    model::OptimizerConfig optimizer;
    double mixup_beta = 0.2;
    bool use_mixup = true;
    std::uint64_t seed = 0;
};

struct TrainResult {
    LoraModule module;
    std::vector<double> loss_trace;
    std::vector<std::string> warnings;
};

/// Each step: fine-tuning batch + equal-size replay sample, instance-normalize,
/// MixUp, then one AdamW step on adapter parameters only.
TrainResult train_lora(const model::BaseModel& model, LoraModule module, const std::vector<series::Window>& data,
                       const std::vector<series::Window>& replay, const TrainOptions& opts);

enum class AveragingLevel {
    Factor, // average A and B separately
    Delta,  // exact average of B*A, represented as concatenated factors
};

LoraModule average_loras(const std::vector<LoraModule>& modules, const std::vector<double>& weights,
                         AveragingLevel level = AveragingLevel::Factor);

bool bitwise_equal(const LoraModule& a, const LoraModule& b);

void save_adapter(const LoraModule& module, const std::filesystem::path& dir);
LoraModule load_adapter(const std::filesystem::path& dir);

} // namespace mixft::lora
