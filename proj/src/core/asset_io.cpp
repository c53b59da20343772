// SPDX-License-Identifier: Apache-2.0
#include "smoj/asset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <zlib.h>

#include "smoj/error.hpp"

namespace smoj {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'O', 'J'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw ParseError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(data_.size() - pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::size_t at = pos_;
    const float f = std::bit_cast<float>(u32(what));
    if (std::isnan(f)) throw ParseError(at, std::string("NaN in ") + what);
    return f;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void write_set(Writer& w, const GaussianSet& set, const GaussianSet* base) {
  // Field arrays in fixed order; `base` subtracts for delta storage.
  auto at = [&](std::size_t j) -> const Gaussian& { return set.gaussians[j]; };
  const std::size_t m = set.size();
  auto rel = [&](float v, float b) { return base ? v - b : v; };
  for (std::size_t j = 0; j < m; ++j)
    for (int c = 0; c < 3; ++c) w.f32(rel(at(j).position[c], base ? base->gaussians[j].position[c] : 0.f));
  for (std::size_t j = 0; j < m; ++j)
    for (int c = 0; c < 3; ++c) w.f32(rel(at(j).scale[c], base ? base->gaussians[j].scale[c] : 0.f));
  for (std::size_t j = 0; j < m; ++j)
    for (int c = 0; c < 4; ++c) w.f32(rel(at(j).orientation[c], base ? base->gaussians[j].orientation[c] : 0.f));
  for (std::size_t j = 0; j < m; ++j)
    for (int c = 0; c < 3; ++c) w.f32(rel(at(j).color[c], base ? base->gaussians[j].color[c] : 0.f));
  for (std::size_t j = 0; j < m; ++j) w.f32(rel(at(j).opacity, base ? base->gaussians[j].opacity : 0.f));
}

GaussianSet read_set(Reader& r, std::size_t m, const std::string& label) {
  const std::string pos = label + " positions", scl = label + " scales", ori = label + " orientations",
                    col = label + " colors", opa = label + " opacities";
  // Check each whole array up front so truncation names the array.
  r.need(m * 12, pos.c_str());
  GaussianSet set;
  set.gaussians.resize(m);
  for (auto& g : set.gaussians)
    for (float& v : g.position) v = r.f32(pos.c_str());
  r.need(m * 12, scl.c_str());
  for (auto& g : set.gaussians)
    for (float& v : g.scale) v = r.f32(scl.c_str());
  r.need(m * 16, ori.c_str());
  for (auto& g : set.gaussians)
    for (float& v : g.orientation) v = r.f32(ori.c_str());
  r.need(m * 12, col.c_str());
  for (auto& g : set.gaussians)
    for (float& v : g.color) v = r.f32(col.c_str());
  r.need(m * 4, opa.c_str());
  for (auto& g : set.gaussians) g.opacity = r.f32(opa.c_str());
  return set;
}

void add_base(GaussianSet& delta, const GaussianSet& base) {
  for (std::size_t j = 0; j < delta.size(); ++j) {
    auto& d = delta.gaussians[j];
    const auto& b = base.gaussians[j];
    for (int c = 0; c < 3; ++c) {
      d.position[c] += b.position[c];
      d.scale[c] += b.scale[c];
      d.color[c] += b.color[c];
    }
    for (int c = 0; c < 4; ++c) d.orientation[c] += b.orientation[c];
    d.opacity += b.opacity;
  }
}

std::string join_violations(const std::vector<Violation>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size() && i < 8; ++i) {
    if (i) s += "; ";
    s += v[i].message;
  }
  if (v.size() > 8) s += "; ... (" + std::to_string(v.size()) + " total)";
  return s;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    c = ::crc32(c, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode_asset(const AvatarAsset& asset, const SaveOptions& opts) {
  const auto violations = validate_asset(asset, opts.validation);
  if (!violations.empty()) {
    throw Error(ErrorCode::kValidation, "refusing to save invalid asset: " + join_violations(violations));
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kSmojVersion);
  w.u32(static_cast<std::uint32_t>(asset.rest.size()));
  w.u32(static_cast<std::uint32_t>(asset.components.size()));
  w.u32(opts.delta_encode ? kFlagDeltaComponents : 0u);
  for (const auto& name : asset.channel_names) {
    if (name.size() > 0xffff) throw Error(ErrorCode::kInvalidArgument, "channel name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  const std::size_t payload_begin = w.size();
  write_set(w, asset.rest, nullptr);
  for (const auto& comp : asset.components) write_set(w, comp, opts.delta_encode ? &asset.rest : nullptr);
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32(std::span(buf).subspan(payload_begin));
  w.u32(crc);
  return std::move(w.buffer());
}

AvatarAsset decode_asset(std::span<const std::uint8_t> bytes, const LoadOptions& opts) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw ParseError(0, "bad magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kSmojVersion) {
    throw ParseError(version_at, "unsupported format version " + std::to_string(version));
  }
  const std::uint32_t m = r.u32("splat count");
  const std::uint32_t k = r.u32("component count");
  const std::size_t flags_at = r.offset();
  const std::uint32_t flags = r.u32("flags");
  if (flags & ~kFlagDeltaComponents) throw ParseError(flags_at, "unknown flag bits");

  AvatarAsset asset;
  asset.channel_names.reserve(std::min<std::uint32_t>(k, 1024));
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint16_t len = r.u16("name table");
    auto s = r.take(len, "name table");
    asset.channel_names.emplace_back(reinterpret_cast<const char*>(s.data()), s.size());
  }

  const std::size_t payload_begin = r.offset();
  asset.rest = read_set(r, m, "rest");
  asset.components.reserve(std::min<std::uint32_t>(k, 1024));
  for (std::uint32_t i = 0; i < k; ++i) {
    asset.components.push_back(read_set(r, m, "component " + std::to_string(i)));
  }
  const std::size_t payload_end = r.offset();
  const std::uint32_t stored_crc = r.u32("crc");
  const std::uint32_t actual = crc32(bytes.subspan(payload_begin, payload_end - payload_begin));
  if (stored_crc != actual) throw ParseError(payload_end, "payload CRC mismatch");
  if (r.offset() != bytes.size()) throw ParseError(r.offset(), "trailing bytes after CRC");

  if (flags & kFlagDeltaComponents) {
    for (auto& comp : asset.components) add_base(comp, asset.rest);
  }
  if (opts.validate) {
    const auto violations = validate_asset(asset, opts.validation);
    if (!violations.empty()) throw Error(ErrorCode::kValidation, "invalid asset: " + join_violations(violations));
  }
  return asset;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::size_t save_asset(const AvatarAsset& asset, const std::filesystem::path& path, const SaveOptions& opts) {
  const auto bytes = encode_asset(asset, opts);
  write_file(path, bytes);
  return bytes.size();
}

AvatarAsset load_asset(const std::filesystem::path& path, const LoadOptions& opts) {
  const auto bytes = read_file(path);
  return decode_asset(bytes, opts);
}

}  // namespace smoj
