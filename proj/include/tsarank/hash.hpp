#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace tsarank {

/// 64-bit FNV-1a. Used for config hashes and dataset fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t state = 0xcbf29ce484222325ull);

std::string hex64(std::uint64_t value);

}  // namespace tsarank
