#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ham/tensor.hpp"

namespace ham {

using Rng = std::mt19937_64;

/// Child seed for stream `stream` of root seed `root`: one SplitMix64 step
/// applied to root + (stream + 1) * golden-ratio constant. Every random
/// quantity in a run is drawn from a stream derived this way.
std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream);

/// Stream id for a named purpose ("data", "eval", ...), FNV-1a of the name.
std::uint64_t stream_id(std::string_view name);

/// Tensor with entries uniform in [lo, hi).
Tensor uniform_tensor(Rng& rng, Shape shape, double lo, double hi);

/// Uniform integer in [lo, hi].
std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi);

}  // namespace ham
