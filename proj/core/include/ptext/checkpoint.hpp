#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ptext/encoder.hpp"

namespace ptext {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers and floats little-endian:
//   "PTXT"  u32 version  u32 N  u32 d  u32 C  u64 seed  u32 bucket_count
//   C x (u32 byte length, UTF-8 class name)
//   N*d f64 coarse rows, N*d f64 fine rows (row-major)
std::string serialize_checkpoint(const PromptBank& bank, std::size_t bucket_count = kDefaultBucketCount);

struct LoadedCheckpoint {
  PromptBank bank;
  std::size_t bucket_count = kDefaultBucketCount;
};

/// Throws CorruptCheckpoint on bad magic, truncation or trailing bytes and
/// VersionMismatch on an unknown version or when `expected_dim` disagrees.
LoadedCheckpoint deserialize_checkpoint(std::string_view bytes, std::optional<std::size_t> expected_dim = {});

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const PromptBank& bank, const std::filesystem::path& path,
                     std::size_t bucket_count = kDefaultBucketCount);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = {});

/// Helpers shared with the CLI.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ptext
