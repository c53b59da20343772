// SPDX-License-Identifier: Apache-2.0
//
// SMOJ binary avatar format, version 1. All integers and floats are
// little-endian.
//
//   "SMOJ" | version u32 | M u32 | K u32 | flags u32
//   K x (u16 length, UTF-8 bytes)                       name table
//   for rest, then each component:                      payload
//     positions f32*3M | scales f32*3M | orientations f32*4M
//     colors f32*3M | opacities f32*M
//   CRC32 of the payload bytes, u32
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "smoj/avatar.hpp"

namespace smoj {

inline constexpr std::uint32_t kSmojVersion = 1;
inline constexpr std::uint32_t kFlagDeltaComponents = 1u << 0;
inline constexpr std::size_t kFloatsPerSplat = 14;

struct SaveOptions {
  // Store components as (component - rest). Reconstruction on load is an f32
  // add, so it is not bit-exact.
  bool delta_encode = false;
  ValidationOptions validation{};
};

struct LoadOptions {
  bool validate = true;
  ValidationOptions validation{};
};

std::vector<std::uint8_t> encode_asset(const AvatarAsset& asset, const SaveOptions& opts = {});
AvatarAsset decode_asset(std::span<const std::uint8_t> bytes, const LoadOptions& opts = {});

// Returns the number of bytes written. Refuses assets that fail validation.
std::size_t save_asset(const AvatarAsset& asset, const std::filesystem::path& path, const SaveOptions& opts = {});
AvatarAsset load_asset(const std::filesystem::path& path, const LoadOptions& opts = {});

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace smoj
