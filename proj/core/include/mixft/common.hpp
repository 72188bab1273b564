#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace mixft {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Cap on worker threads used by parallel loops. 1 (the default) runs inline.
void set_thread_count(int n);
int thread_count();

/// Calls fn(i) for i in [0, n). Work is split into fixed contiguous chunks
/// independent of the thread count, so any per-index output is identical
/// whether run on one thread or many. Callers reduce results in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Shortest-roundtrip-safe decimal text ("%.17g").
std::string format_double(double v);

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

inline std::span<const double> as_span(const Vec& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

} // namespace mixft
