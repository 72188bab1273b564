#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixft/common.hpp"

namespace mixft::lora {

struct AdapterConfig {
    int rank = 2;
    double alpha = 16.0;
    double dropout = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Low-rank factor pair for one affine map: delta = scaling * B * A.
struct LoraFactor {
    std::string target; // name of the adapted affine map, e.g. "block0.first"
    Mat A;              // rank x in
    Mat B;              // out x rank
};

/// One adapter: a factor pair per adapted map of the base model.
struct LoraModule {
    AdapterConfig config;
    double scaling = 8.0; // alpha / rank at creation; kept when factors are concatenated
    std::vector<LoraFactor> factors;

    const LoraFactor* find(const std::string& target) const;
    std::size_t parameter_count() const;

    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;
    std::vector<std::string> parameter_names() const;

    /// Same shapes, all entries zero.
    LoraModule zeros_like() const;
};

using AdapterSet = std::vector<LoraModule>;

} // namespace mixft::lora
