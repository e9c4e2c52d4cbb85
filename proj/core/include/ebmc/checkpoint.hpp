#pragma once

// Binary parameter checkpoint, little-endian:
//
//   "EBMCCKPT"           8-byte magic
//   u32 version          currently 1
//   u64 n, n bytes       metadata text, "key=value" lines
//   u64 count            number of arrays
//   per array: u32 name length, name, u64 rows, u64 cols, rows*cols f64
//
// Values are stored bit-exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "ebmc/trainer.hpp"

namespace ebmc::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

/// Model shape keys (model.*) are added to `metadata` automatically.
void save(const train::Model& model, const std::map<std::string, std::string>& metadata,
          const std::filesystem::path& path);

struct Loaded {
  train::Model model;
  std::map<std::string, std::string> metadata;
};

/// Throws IoError on a bad magic, version, truncation or a missing/misshapen
/// array.
Loaded load(const std::filesystem::path& path);

}  // namespace ebmc::checkpoint
