// SPDX-License-Identifier: Apache-2.0
//
// Image and camera file formats.
//
//   PNG   8-bit gray, RGB, or RGBA previews
//   SMIM  "SMIM v1 H W C\n" followed by H*W*C f32 little-endian, row-major
//   cameras, one per line: 16 world->camera extrinsic values (row-major 4x4),
//           fx fy cx cy, width height
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoj/avatar.hpp"
#include "smoj/render.hpp"

namespace smoj {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1, 3, or 4
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

std::vector<std::uint8_t> encode_png(const Image8& image);
Image8 decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

// Rounds [0,1] floats to 8 bits (values outside are clamped).
Image8 quantize(std::span<const float> values, int width, int height, int channels);
std::vector<float> dequantize(const Image8& image);

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

std::vector<std::uint8_t> encode_smim(const RawImage& image);
RawImage decode_smim(std::span<const std::uint8_t> bytes);
void write_smim(const std::filesystem::path& path, const RawImage& image);
RawImage read_smim(const std::filesystem::path& path);

std::string format_cameras(const std::vector<Camera>& cameras);
std::vector<Camera> parse_cameras(std::string_view text);
void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras);
std::vector<Camera> read_cameras(const std::filesystem::path& path);

// Buffer views of a render as raw images (normal has 3 channels).
RawImage raw_rgb(const render::RenderOutput& out);
RawImage raw_alpha(const render::RenderOutput& out);
RawImage raw_depth(const render::RenderOutput& out);
RawImage raw_normal(const render::RenderOutput& out);

}  // namespace smoj
