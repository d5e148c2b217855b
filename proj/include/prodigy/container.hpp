#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prodigy/graph.hpp"

namespace prodigy {

/// On-disk layout shared by prompt dumps and checkpoints:
///   magic (8 bytes) | u32 version | u64 header length | JSON header |
///   u64 value count | values as little-endian IEEE-754 doubles |
///   [u64 FNV-1a of all preceding bytes, when checksummed]
/// Matrices are stored row-major in the value block and referenced from the header
/// by {"offset", "rows", "cols"}.
struct Container {
  nlohmann::json header;
  std::vector<double> values;

  nlohmann::json put(const Matrix& m);
  Matrix get(const nlohmann::json& ref) const;
};

void write_container(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                     const Container& c, bool checksum);

/// Throws LoadError on bad magic, version mismatch, truncation, or checksum failure.
Container read_container(const std::filesystem::path& path, std::string_view magic,
                         std::uint32_t version, bool checksum);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace prodigy
