#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixft/adapter.hpp"
#include "mixft/common.hpp"
#include "mixft/series.hpp"

namespace mixft::model {

struct ModelConfig {
    int patch = 8;
    int hidden = 16;
    int blocks = 2;
    int horizon = 8;
    int context = 64;
    std::uint64_t seed = 0;

    int tokens() const { return context / patch; }
    void validate() const;
};

struct Affine {
    Mat weight; // out x in
    Vec bias;   // out
};

/// Two affine maps around a tanh, added back onto the token: h + W2 tanh(W1 h + b1) + b2.
struct ResidualBlock {
    Affine first;
    Affine second;
};

/// Patch forecaster: patch embedding, residual token blocks, mean-pool, linear head.
/// Inputs are instance-normalized inside forward and the forecast is mapped back.
struct BaseModel {
    ModelConfig config;
    Affine patch_embed;
    std::vector<ResidualBlock> blocks;
    Affine head;

    std::size_t parameter_count() const;
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;
    std::vector<std::string> parameter_names() const;

    /// Names and (out, in) shapes of the maps adapters attach to.
    std::vector<std::pair<std::string, std::pair<int, int>>> adaptable_maps() const;

    BaseModel zeros_like() const;
};

BaseModel init_model(const ModelConfig& cfg);

struct ForwardOutput {
    Vec forecast; // denormalized, length H
    Mat tokens;   // post-block token states, (L/P) x d
};

ForwardOutput forward(const BaseModel& model, const lora::LoraModule* adapter, std::span<const double> context);

/// Mean over post-block tokens of an adapter-free forward.
Vec embed(const BaseModel& model, std::span<const double> context);

struct LossOptions {
    // With an adapter supplied: true trains the adapter (base frozen),
    // false treats the adapter as fixed and differentiates the base.
    bool train_adapter = true;
    double dropout = 0.0;
    std::uint64_t dropout_seed = 0;
};

struct LossAndGrads {
    double loss = 0.0;
    BaseModel base_grads;          // all-zero when the base is frozen
    lora::LoraModule adapter_grads; // empty factors when no adapter
};

/// Mean squared error of normalized forecasts against targets scaled by
/// each context's own location and scale, with analytic gradients.
LossAndGrads loss_and_grads(const BaseModel& model, const lora::LoraModule* adapter,
                            const std::vector<series::Pair>& batch, const LossOptions& opts = {});

double loss_only(const BaseModel& model, const lora::LoraModule* adapter, const std::vector<series::Pair>& batch);

struct OptimizerConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 64;
    int steps = 500;

    void validate() const;
};

/// Adam with decoupled weight decay over a fixed list of parameter buffers.
class AdamW {
public:
    AdamW(const OptimizerConfig& cfg, const std::vector<std::size_t>& sizes);

    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads);
    int steps_taken() const { return t_; }

private:
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    int t_ = 0;
};

struct PretrainResult {
    BaseModel model;
    std::vector<double> loss_trace;
};

inline constexpr double kDivergenceThreshold = 1e6;

PretrainResult pretrain(BaseModel model, const std::vector<series::Window>& windows, const OptimizerConfig& opt,
                        std::uint64_t seed);

void save_model(const BaseModel& model, const std::filesystem::path& dir, int step_count = 0);
BaseModel load_model(const std::filesystem::path& dir);

} // namespace mixft::model
