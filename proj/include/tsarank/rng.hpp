#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tsarank {

using Rng = std::mt19937_64;

/// Seed for a named sub-stream ("data", "init", "sampling", ...) of a global
/// seed. Distinct names give independent streams; the mapping is stable.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream, std::uint64_t index);

/// Uniform integer in [0, n) by rejection; identical across standard libraries.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) from the top 53 bits.
double uniform_unit(Rng& rng);

/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

/// k distinct indices from [0, n), uniformly, in sampling order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace tsarank
