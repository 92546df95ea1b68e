#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "affgrasp/nets/network.hpp"

namespace affgrasp::nets {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian: "RUNC", u32 version, u32 length + spec text, u32 tensor count, then per
// tensor u32 rank, u32 dims[rank], float32 values; trailing u64 FNV-1a of all prior bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Parameters<float>& params);
/// Checksum is verified before anything else: CorruptCheckpoint, then UnsupportedVersion.
Parameters<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const Parameters<float>& params, const std::filesystem::path& path);
Parameters<float> load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace affgrasp::nets
