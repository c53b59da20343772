// SPDX-License-Identifier: Apache-2.0
#include "smoj/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "smoj/asset_io.hpp"
#include "smoj/error.hpp"

namespace smoj {

static_assert(std::endian::native == std::endian::little, "raw f32 I/O assumes a little-endian host");

namespace {

png_uint_32 png_format(int channels) {
  switch (channels) {
    case 1:
      return PNG_FORMAT_GRAY;
    case 3:
      return PNG_FORMAT_RGB;
    case 4:
      return PNG_FORMAT_RGBA;
    default:
      throw Error(ErrorCode::kInvalidArgument, "png: unsupported channel count " + std::to_string(channels));
  }
}

void check_image(const Image8& image) {
  png_format(image.channels);
  if (image.width <= 0 || image.height <= 0) throw Error(ErrorCode::kInvalidArgument, "png: empty image");
  const std::size_t need = static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (image.pixels.size() != need) throw Error(ErrorCode::kInvalidArgument, "png: pixel buffer size mismatch");
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
  check_image(image);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = png_format(image.channels);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kRuntime, std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kRuntime, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kParse, std::string("png decode: ") + img.message);
  }
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  if (img.format & PNG_FORMAT_FLAG_ALPHA) {
    img.format = PNG_FORMAT_RGBA;
    out.channels = 4;
  } else if (img.format & PNG_FORMAT_FLAG_COLOR) {
    img.format = PNG_FORMAT_RGB;
    out.channels = 3;
  } else {
    img.format = PNG_FORMAT_GRAY;
    out.channels = 1;
  }
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::kParse, std::string("png decode: ") + img.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) { write_file(path, encode_png(image)); }

Image8 read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Image8 quantize(std::span<const float> values, int width, int height, int channels) {
  Image8 img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  if (values.size() != n) throw Error(ErrorCode::kInvalidArgument, "quantize: buffer size mismatch");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = std::clamp(std::isfinite(values[i]) ? values[i] : 0.f, 0.f, 1.f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  return img;
}

std::vector<float> dequantize(const Image8& image) {
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(image.pixels[i]) / 255.f;
  return out;
}

std::vector<std::uint8_t> encode_smim(const RawImage& image) {
  if (image.height < 0 || image.width < 0 || image.channels <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "smim: invalid dimensions");
  }
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width * image.channels;
  if (image.data.size() != n) throw Error(ErrorCode::kInvalidArgument, "smim: data size mismatch");
  const std::string header = "SMIM v1 " + std::to_string(image.height) + " " + std::to_string(image.width) + " " +
                             std::to_string(image.channels) + "\n";
  std::vector<std::uint8_t> out(header.size() + 4 * n);
  std::memcpy(out.data(), header.data(), header.size());
  if (n) std::memcpy(out.data() + header.size(), image.data.data(), 4 * n);
  return out;
}

RawImage decode_smim(std::span<const std::uint8_t> bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (nl == bytes.end()) throw ParseError(0, "smim: missing header line");
  const std::string header(bytes.begin(), nl);
  std::istringstream in(header);
  std::string magic, version;
  long h = -1, w = -1, c = -1;
  in >> magic >> version >> h >> w >> c;
  if (magic != "SMIM") throw ParseError(0, "smim: bad magic");
  if (version != "v1") throw ParseError(5, "smim: unsupported version '" + version + "'");
  std::string rest;
  if (!in || h < 0 || w < 0 || c <= 0 || (in >> rest)) throw ParseError(0, "smim: malformed header");
  const std::size_t offset = header.size() + 1;
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
  if (bytes.size() - offset != 4 * n) {
    throw ParseError(bytes.size() < offset + 4 * n ? bytes.size() : offset + 4 * n,
                     bytes.size() < offset + 4 * n ? "smim: truncated data" : "smim: trailing bytes");
  }
  RawImage out;
  out.height = static_cast<int>(h);
  out.width = static_cast<int>(w);
  out.channels = static_cast<int>(c);
  out.data.resize(n);
  if (n) std::memcpy(out.data.data(), bytes.data() + offset, 4 * n);
  return out;
}

void write_smim(const std::filesystem::path& path, const RawImage& image) { write_file(path, encode_smim(image)); }

RawImage read_smim(const std::filesystem::path& path) { return decode_smim(read_file(path)); }

namespace {

void append_number(std::string& s, double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

}  // namespace

std::string format_cameras(const std::vector<Camera>& cameras) {
  std::string out;
  for (const auto& cam : cameras) {
    std::string line;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        double v;
        if (r < 3) {
          v = c < 3 ? cam.rotation(r, c) : cam.translation[r];
        } else {
          v = c < 3 ? 0.0 : 1.0;
        }
        append_number(line, v);
        line += ' ';
      }
    }
    for (double v : {cam.fx, cam.fy, cam.cx, cam.cy}) {
      append_number(line, v);
      line += ' ';
    }
    line += std::to_string(cam.width) + " " + std::to_string(cam.height) + "\n";
    out += line;
  }
  return out;
}

std::vector<Camera> parse_cameras(std::string_view text) {
  std::vector<Camera> cams;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#') continue;
    std::vector<double> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      double v = 0.0;
      const auto r = std::from_chars(line.data() + i, line.data() + line.size(), v);
      if (r.ec != std::errc() || (r.ptr != line.data() + line.size() && *r.ptr != ' ' && *r.ptr != '\t')) {
        throw Error(ErrorCode::kParse, "cameras line " + std::to_string(line_no) + ": bad number");
      }
      values.push_back(v);
      i = static_cast<std::size_t>(r.ptr - line.data());
    }
    if (values.size() != 22) {
      throw Error(ErrorCode::kParse, "cameras line " + std::to_string(line_no) + ": expected 22 values, got " +
                                         std::to_string(values.size()));
    }
    Camera cam;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = values[4 * r + c];
      cam.translation[r] = values[4 * r + 3];
    }
    cam.fx = values[16];
    cam.fy = values[17];
    cam.cx = values[18];
    cam.cy = values[19];
    if (values[20] != std::floor(values[20]) || values[21] != std::floor(values[21]) || values[20] < 0 ||
        values[21] < 0 || values[20] > 1e6 || values[21] > 1e6) {
      throw Error(ErrorCode::kParse, "cameras line " + std::to_string(line_no) + ": bad image size");
    }
    cam.width = static_cast<int>(values[20]);
    cam.height = static_cast<int>(values[21]);
    const std::string why = check_camera(cam);
    if (!why.empty()) throw Error(ErrorCode::kValidation, "cameras line " + std::to_string(line_no) + ": " + why);
    cams.push_back(cam);
  }
  return cams;
}

void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras) {
  const std::string text = format_cameras(cameras);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<Camera> read_cameras(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_cameras(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

namespace {

RawImage make_raw(const render::RenderOutput& out, const std::vector<float>& data, int channels) {
  RawImage img;
  img.height = out.height;
  img.width = out.width;
  img.channels = channels;
  img.data = data;
  return img;
}

}  // namespace

RawImage raw_rgb(const render::RenderOutput& out) { return make_raw(out, out.rgb, 3); }
RawImage raw_alpha(const render::RenderOutput& out) { return make_raw(out, out.alpha, 1); }
RawImage raw_depth(const render::RenderOutput& out) { return make_raw(out, out.depth, 1); }
RawImage raw_normal(const render::RenderOutput& out) { return make_raw(out, out.normal, 3); }

}  // namespace smoj
