#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace mixft::cli {

struct CommandOptions {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> input;  // forecast / timeline: series CSV
    int channel = 0;
    std::optional<std::string> scores; // evaluate / select-k fixture mode
    bool all_modes = false;            // forecast: one file per routing mode
};

/// Seeds a command runs with: --seed if given, else run.seeds.
std::vector<std::uint64_t> effective_seeds(const RunConfig& cfg, const CommandOptions& opts);

void cmd_synth(const RunConfig& cfg, const CommandOptions& opts);
void cmd_pretrain(const RunConfig& cfg, const CommandOptions& opts);
void cmd_fit_gmm(const RunConfig& cfg, const CommandOptions& opts);
void cmd_finetune(const RunConfig& cfg, const CommandOptions& opts);
void cmd_forecast(const RunConfig& cfg, const CommandOptions& opts);
void cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts);
void cmd_select_k(const RunConfig& cfg, const CommandOptions& opts);
void cmd_ablate(const RunConfig& cfg, const CommandOptions& opts);
void cmd_timeline(const RunConfig& cfg, const CommandOptions& opts);

struct ScoreTable {
    std::vector<std::string> datasets;
    std::vector<std::string> methods;
    Mat scores; // datasets x methods
};

/// Reads a score table CSV: header `dataset,<name>,...`, one row per dataset.
ScoreTable read_score_table(const std::filesystem::path& path);

/// Content hash of a file or of a directory tree (relative names + file hashes).
std::string hash_path(const std::filesystem::path& path);

} // namespace mixft::cli
