#pragma once

#include <cstdint>
#include <string_view>

namespace ebmc {

/// 64-bit FNV-1a; stable across platforms and runs.
constexpr std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named consumer: seed + stable_hash(consumer) (mod 2^64).
/// Adding a consumer never changes the streams of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view consumer) {
  return seed + stable_hash(consumer);
}

}  // namespace ebmc
