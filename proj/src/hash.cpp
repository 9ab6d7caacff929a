#include "tsarank/hash.hpp"

#include <cstring>
#include <cstdio>

namespace tsarank {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ull;
  }
  return state;
}

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t state) {
  for (double v : values) {
    char raw[sizeof(double)];
    std::memcpy(raw, &v, sizeof(double));
    state = fnv1a64(std::string_view(raw, sizeof(double)), state);
  }
  return state;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace tsarank
