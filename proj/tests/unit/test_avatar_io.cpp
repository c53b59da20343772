// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "smoj/asset_io.hpp"
#include "smoj/error.hpp"
#include "smoj/synth.hpp"

using namespace smoj;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "smoj_unit_avatar_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Independent little-endian reader for layout checks.
struct ByteCursor {
  const std::vector<std::uint8_t>& b;
  std::size_t at = 0;
  std::uint32_t u32() {
    std::uint32_t v = b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
    at += 4;
    return v;
  }
  std::uint16_t u16() {
    std::uint16_t v = static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
    at += 2;
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
};

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

}  // namespace

TEST(Validate, SyntheticAvatarIsValid) {
  SynthOptions o;
  o.splats = 200;
  const AvatarAsset a = make_synthetic_avatar(o);
  EXPECT_EQ(a.channel_count(), 16u);
  EXPECT_EQ(a.channel_names, default_channel_names());
  EXPECT_TRUE(validate_asset(a).empty());
}

TEST(Validate, ComponentCountMismatchReportedOnce) {
  AvatarAsset a = make_random_asset(10, 16, 3);
  a.components[3].gaussians.pop_back();
  const auto v = validate_asset(a);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::kSplatCount);
  EXPECT_EQ(v[0].set_index, 3);
}

TEST(Validate, OpacityOutOfRangeNamesSplat) {
  AvatarAsset a = make_random_asset(10, 16, 4);
  a.rest.gaussians[7].opacity = 1.5f;
  const auto v = validate_asset(a);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::kOpacity);
  EXPECT_EQ(v[0].splat_index, 7);
  EXPECT_NE(format_violation(v[0]).find("7"), std::string::npos);
}

TEST(Validate, EachInvariantHasAKind) {
  const AvatarAsset base = make_random_asset(4, 16, 5);
  struct Case {
    ViolationKind kind;
    std::function<void(AvatarAsset&)> mutate;
  };
  const std::vector<Case> cases = {
      {ViolationKind::kOrientation, [](AvatarAsset& a) { a.components[0].gaussians[1].orientation = {1, 1, 0, 0}; }},
      {ViolationKind::kScale, [](AvatarAsset& a) { a.rest.gaussians[2].scale[1] = 0.f; }},
      {ViolationKind::kColor, [](AvatarAsset& a) { a.rest.gaussians[0].color[2] = -0.1f; }},
      {ViolationKind::kNonFinite, [](AvatarAsset& a) { a.rest.gaussians[3].position[0] = NAN; }},
      {ViolationKind::kChannelNames, [](AvatarAsset& a) { std::swap(a.channel_names[0], a.channel_names[1]); }},
      {ViolationKind::kChannelCount, [](AvatarAsset& a) { a.channel_names.pop_back(); }},
  };
  for (const auto& c : cases) {
    AvatarAsset a = base;
    c.mutate(a);
    const auto v = validate_asset(a);
    ASSERT_FALSE(v.empty());
    bool found = false;
    for (const auto& x : v) found = found || x.kind == c.kind;
    EXPECT_TRUE(found) << static_cast<int>(c.kind);
  }
}

TEST(Validate, CustomProfileAllowsOtherChannels) {
  const AvatarAsset a = make_random_asset(5, 3, 9);
  EXPECT_FALSE(validate_asset(a).empty());
  EXPECT_TRUE(validate_asset(a, ValidationOptions{false}).empty());
}

TEST(Quaternion, NormalizationIsIdempotent) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0.f, 3.f);
  for (int i = 0; i < 10000; ++i) {
    const Quatf q{n(rng), n(rng), n(rng), n(rng)};
    const Quatf once = normalize_quat(q);
    EXPECT_EQ(normalize_quat(once), once);
    EXPECT_NEAR(quat_norm(once), 1.0, 1e-6);
  }
  EXPECT_EQ(normalize_quat({0, 0, 0, 0}), (Quatf{1, 0, 0, 0}));
}

TEST(Deltas, IdenticalComponentsGiveZero) {
  AvatarAsset a = make_random_asset(20, 16, 1);
  for (auto& c : a.components) c = a.rest;
  for (const auto& d : component_deltas(a)) {
    EXPECT_EQ(d.position.max_abs, 0.0);
    EXPECT_EQ(d.opacity.mean_abs, 0.0);
    EXPECT_EQ(d.changed_splats, 0u);
  }
}

TEST(Deltas, SingleMovedSplat) {
  AvatarAsset a = make_random_asset(20, 16, 2);
  for (auto& c : a.components) c = a.rest;
  a.components[5].gaussians[3].position[0] += 0.1f;
  const auto d = component_deltas(a);
  const double expect = static_cast<double>(a.components[5].gaussians[3].position[0]) - a.rest.gaussians[3].position[0];
  EXPECT_DOUBLE_EQ(d[5].position.max_abs, expect);
  EXPECT_NEAR(d[5].position.max_abs, 0.1, 1e-6);
  EXPECT_EQ(d[5].changed_splats, 1u);
  EXPECT_EQ(d[5].channel, "eyeBlinkRight");
}

TEST(Deltas, MatchElementwiseRecomputation) {
  const AvatarAsset a = make_random_asset(50, 16, 7);
  const auto d = component_deltas(a);
  ASSERT_EQ(d.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    double pmax = 0, psum = 0, omax = 0, osum = 0;
    std::size_t changed = 0;
    for (std::size_t j = 0; j < 50; ++j) {
      const auto& r = a.rest.gaussians[j];
      const auto& c = a.components[i].gaussians[j];
      for (int k = 0; k < 3; ++k) {
        const double e = std::abs(static_cast<double>(c.position[k]) - r.position[k]);
        pmax = std::max(pmax, e);
        psum += e;
      }
      for (int k = 0; k < 4; ++k) {
        const double e = std::abs(static_cast<double>(c.orientation[k]) - r.orientation[k]);
        omax = std::max(omax, e);
        osum += e;
      }
      if (!(c == r)) ++changed;
    }
    EXPECT_DOUBLE_EQ(d[i].position.max_abs, pmax);
    EXPECT_NEAR(d[i].position.mean_abs, psum / 150.0, 1e-12);
    EXPECT_DOUBLE_EQ(d[i].orientation.max_abs, omax);
    EXPECT_NEAR(d[i].orientation.mean_abs, osum / 200.0, 1e-12);
    EXPECT_EQ(d[i].changed_splats, changed);
  }
}

TEST(Format, Crc32MatchesBitwiseOracle) {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> bytes(check.begin(), check.end());
  EXPECT_EQ(crc32(bytes), 0xCBF43926u);
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> rnd(4097);
  for (auto& b : rnd) b = static_cast<std::uint8_t>(rng());
  EXPECT_EQ(crc32(rnd), oracle::crc32(rnd.data(), rnd.size()));
}

TEST(Format, SizeOfSingleSplatAssetFollowsLayout) {
  const AvatarAsset a = make_random_asset(1, 16, 3);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  const std::size_t expected = 4 + 4 * 4 + names + 17 * 14 * 4 + 4;
  EXPECT_EQ(encode_asset(a).size(), expected);
  const auto path = temp_path("one.smoj");
  EXPECT_EQ(save_asset(a, path), expected);
  EXPECT_EQ(std::filesystem::file_size(path), expected);
}

TEST(Format, ByteLayoutReadsBackWithIndependentParser) {
  const AvatarAsset a = make_random_asset(3, 16, 8);
  const auto bytes = encode_asset(a);
  ByteCursor c{bytes};
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SMOJ");
  c.at = 4;
  EXPECT_EQ(c.u32(), 1u);
  EXPECT_EQ(c.u32(), 3u);
  EXPECT_EQ(c.u32(), 16u);
  EXPECT_EQ(c.u32(), 0u);
  for (const auto& name : a.channel_names) {
    const std::uint16_t len = c.u16();
    ASSERT_EQ(len, name.size());
    EXPECT_EQ(std::string(bytes.begin() + c.at, bytes.begin() + c.at + len), name);
    c.at += len;
  }
  const std::size_t payload = c.at;
  std::vector<const GaussianSet*> sets{&a.rest};
  for (const auto& s : a.components) sets.push_back(&s);
  for (const GaussianSet* s : sets) {
    for (const auto& g : s->gaussians)
      for (float v : g.position) EXPECT_EQ(c.f32(), v);
    for (const auto& g : s->gaussians)
      for (float v : g.scale) EXPECT_EQ(c.f32(), v);
    for (const auto& g : s->gaussians)
      for (float v : g.orientation) EXPECT_EQ(c.f32(), v);
    for (const auto& g : s->gaussians)
      for (float v : g.color) EXPECT_EQ(c.f32(), v);
    for (const auto& g : s->gaussians) EXPECT_EQ(c.f32(), g.opacity);
  }
  const std::size_t end = c.at;
  EXPECT_EQ(c.u32(), oracle::crc32(bytes.data() + payload, end - payload));
  EXPECT_EQ(c.at, bytes.size());
}

TEST(Format, RandomAssetsRoundTripBitExactly) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const AvatarAsset a = make_random_asset(1 + seed * 7, 16, seed);
    const auto bytes = encode_asset(a);
    const AvatarAsset b = decode_asset(bytes);
    EXPECT_EQ(b.channel_names, a.channel_names);
    EXPECT_EQ(b.rest, a.rest);
    EXPECT_EQ(b.components, a.components);
    EXPECT_EQ(encode_asset(b), bytes);
  }
}

TEST(Format, FileRoundTrip) {
  SynthOptions o;
  o.splats = 300;
  const AvatarAsset a = make_synthetic_avatar(o);
  const auto path = temp_path("synth.smoj");
  save_asset(a, path);
  const AvatarAsset b = load_asset(path);
  EXPECT_EQ(b.rest, a.rest);
  EXPECT_EQ(b.components, a.components);
  EXPECT_EQ(read_file(path), encode_asset(a));
}

TEST(Format, EmptyAsset) {
  AvatarAsset a;
  a.channel_names = default_channel_names();
  a.components.resize(16);
  const auto bytes = encode_asset(a);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  EXPECT_EQ(bytes.size(), 20 + names + 4);
  const AvatarAsset b = decode_asset(bytes);
  EXPECT_EQ(b.splat_count(), 0u);
  EXPECT_EQ(b.channel_count(), 16u);
}

TEST(Format, BadMagicAtOffsetZero) {
  auto bytes = encode_asset(make_random_asset(2, 16, 1));
  bytes[1] = 'X';
  try {
    decode_asset(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Format, VersionMismatch) {
  auto bytes = encode_asset(make_random_asset(2, 16, 1));
  bytes[4] = 2;
  try {
    decode_asset(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Format, TruncationNamesTheArray) {
  const AvatarAsset a = make_random_asset(5, 16, 1);
  const auto bytes = encode_asset(a);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  const std::size_t payload = 20 + names;
  // Cut inside the rest-set scales array.
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(payload + 5 * 12 + 7));
  try {
    decode_asset(cut);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("rest scales"), std::string::npos) << e.what();
    EXPECT_EQ(e.offset(), payload + 5 * 12);
  }
  for (std::size_t len = 0; len < bytes.size(); len += 13) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(len));
    EXPECT_THROW(decode_asset(part), ParseError) << len;
  }
}

TEST(Format, NaNPayloadRejected) {
  const AvatarAsset a = make_random_asset(2, 16, 1);
  auto bytes = encode_asset(a);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  const std::size_t at = 20 + names + 4;
  const std::uint32_t nan_bits = 0x7fc00000u;
  std::memcpy(&bytes[at], &nan_bits, 4);
  try {
    decode_asset(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), at);
    EXPECT_NE(std::string(e.what()).find("NaN"), std::string::npos);
  }
}

TEST(Format, EverySingleBitFlipInPayloadOrCrcIsDetected) {
  const AvatarAsset a = make_random_asset(2, 16, 12);
  const auto bytes = encode_asset(a);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  for (std::size_t i = 20 + names; i < bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = bytes;
      bad[i] ^= static_cast<std::uint8_t>(1u << bit);
      EXPECT_THROW(decode_asset(bad), ParseError) << i << ":" << bit;
    }
  }
}

TEST(Format, TrailingBytesAndUnknownFlagsRejected) {
  auto bytes = encode_asset(make_random_asset(2, 16, 1));
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_asset(longer), ParseError);
  bytes[16] = 4;
  EXPECT_THROW(decode_asset(bytes), ParseError);
}

TEST(Format, SaveRefusesInvalidAsset) {
  AvatarAsset a = make_random_asset(4, 16, 1);
  a.rest.gaussians[0].opacity = 2.f;
  EXPECT_FALSE(validate_asset(a).empty());
  EXPECT_EQ(code_of([&] { save_asset(a, temp_path("bad.smoj")); }), ErrorCode::kValidation);
}

TEST(Format, LoadValidationCanBeDeferred) {
  const AvatarAsset a = make_random_asset(4, 16, 1);
  auto bytes = encode_asset(a);
  std::size_t names = 0;
  for (const auto& n : a.channel_names) names += 2 + n.size();
  const std::size_t payload = 20 + names;
  const std::size_t end = bytes.size() - 4;
  // Rest opacity of splat 0 sits after 13 floats per splat of the other arrays.
  const float two = 2.f;
  std::memcpy(&bytes[payload + 4 * 13 * 4], &two, 4);
  const std::uint32_t crc = oracle::crc32(bytes.data() + payload, end - payload);
  for (int i = 0; i < 4; ++i) bytes[end + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  EXPECT_EQ(code_of([&] { decode_asset(bytes); }), ErrorCode::kValidation);
  LoadOptions lo;
  lo.validate = false;
  EXPECT_EQ(decode_asset(bytes, lo).rest.gaussians[0].opacity, 2.f);
}

TEST(Format, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_asset("/nonexistent/dir/a.smoj"); }), ErrorCode::kIo);
}

TEST(Format, DeltaEncodingReconstructsComponents) {
  const AvatarAsset a = make_random_asset(30, 16, 21);
  SaveOptions so;
  so.delta_encode = true;
  const auto bytes = encode_asset(a, so);
  ByteCursor c{bytes};
  c.at = 16;
  EXPECT_EQ(c.u32() & kFlagDeltaComponents, kFlagDeltaComponents);
  const AvatarAsset b = decode_asset(bytes);
  EXPECT_EQ(b.rest, a.rest);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      const auto& x = a.components[i].gaussians[j];
      const auto& y = b.components[i].gaussians[j];
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(x.position[k], y.position[k], 1e-6);
      for (int k = 0; k < 4; ++k) EXPECT_NEAR(x.orientation[k], y.orientation[k], 1e-6);
      EXPECT_NEAR(x.opacity, y.opacity, 1e-6);
    }
  }
}
