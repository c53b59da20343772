// SPDX-License-Identifier: Apache-2.0
#include "smoj/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

namespace smoj {

namespace {

Quatf to_quatf(const Eigen::Quaterniond& q) {
  return normalize_quat({static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                         static_cast<float>(q.z())});
}

Eigen::Quaterniond from_quatf(const Quatf& q) { return Eigen::Quaterniond(q[0], q[1], q[2], q[3]); }

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct ChannelShape {
  Eigen::Vector3d center;  // on the unit-radius face
  Eigen::Vector3d offset;  // displacement at full activation
  Eigen::Vector3d tint;    // color change at full activation
  double tilt;             // rotation (radians) about x at full activation
};

// One entry per FACS channel, same order as kFacsChannels. +x is the
// avatar's left, +y up, +z out of the face.
const ChannelShape kShapes[16] = {
    {{0.30, 0.38, 0.85}, {0.0, -0.06, 0.0}, {-0.05, -0.05, -0.05}, 0.10},   // browDownLeft
    {{-0.30, 0.38, 0.85}, {0.0, -0.06, 0.0}, {-0.05, -0.05, -0.05}, 0.10},  // browDownRight
    {{0.30, 0.38, 0.85}, {0.0, 0.08, 0.0}, {0.03, 0.03, 0.03}, -0.10},      // browUpLeft
    {{-0.30, 0.38, 0.85}, {0.0, 0.08, 0.0}, {0.03, 0.03, 0.03}, -0.10},     // browUpRight
    {{0.28, 0.18, 0.93}, {0.0, -0.03, -0.02}, {-0.25, -0.20, -0.15}, 0.30}, // eyeBlinkLeft
    {{-0.28, 0.18, 0.93}, {0.0, -0.03, -0.02}, {-0.25, -0.20, -0.15}, 0.30},// eyeBlinkRight
    {{0.0, -0.55, 0.80}, {0.0, -0.14, 0.02}, {-0.10, -0.15, -0.15}, 0.25},  // jawOpen
    {{0.0, -0.60, 0.75}, {0.10, 0.0, 0.0}, {0.0, 0.0, 0.0}, 0.0},           // jawLeft
    {{0.0, -0.60, 0.75}, {-0.10, 0.0, 0.0}, {0.0, 0.0, 0.0}, 0.0},          // jawRight
    {{0.0, -0.40, 0.92}, {0.0, 0.0, 0.08}, {0.10, -0.05, -0.05}, -0.15},    // lipsPucker
    {{0.18, -0.42, 0.88}, {0.0, -0.06, 0.0}, {-0.05, -0.05, 0.0}, 0.15},    // mouthFrownLeft
    {{-0.18, -0.42, 0.88}, {0.0, -0.06, 0.0}, {-0.05, -0.05, 0.0}, 0.15},   // mouthFrownRight
    {{0.18, -0.40, 0.88}, {0.04, 0.07, 0.0}, {0.08, 0.02, 0.0}, -0.15},     // mouthSmileLeft
    {{-0.18, -0.40, 0.88}, {-0.04, 0.07, 0.0}, {0.08, 0.02, 0.0}, -0.15},   // mouthSmileRight
    {{0.20, -0.44, 0.86}, {0.07, -0.02, 0.0}, {0.0, 0.0, 0.0}, 0.05},       // mouthStretchLeft
    {{-0.20, -0.44, 0.86}, {-0.07, -0.02, 0.0}, {0.0, 0.0, 0.0}, 0.05},     // mouthStretchRight
};

Eigen::Vector3d skin_color(const Eigen::Vector3d& unit) {
  Eigen::Vector3d c(0.93, 0.74, 0.60);
  const auto near = [&](double x, double y, double r) {
    return std::exp(-((unit.x() - x) * (unit.x() - x) + (unit.y() - y) * (unit.y() - y)) / (2 * r * r)) *
           (unit.z() > 0.5 ? 1.0 : 0.0);
  };
  const double eyes = std::max(near(0.28, 0.18, 0.07), near(-0.28, 0.18, 0.07));
  const double brows = std::max(near(0.30, 0.38, 0.06), near(-0.30, 0.38, 0.06));
  const double mouth = near(0.0, -0.42, 0.09);
  c = c * (1 - eyes) + Eigen::Vector3d(0.10, 0.15, 0.35) * eyes;
  c = c * (1 - brows) + Eigen::Vector3d(0.30, 0.20, 0.12) * brows;
  c = c * (1 - mouth) + Eigen::Vector3d(0.75, 0.25, 0.30) * mouth;
  // Hair on the back and top.
  const double hair = std::clamp((unit.y() - 0.55) * 4.0, 0.0, 1.0) + std::clamp(-unit.z() * 3.0, 0.0, 1.0);
  const double h = std::min(hair, 1.0);
  return c * (1 - h) + Eigen::Vector3d(0.25, 0.15, 0.08) * h;
}

}  // namespace

AvatarAsset make_synthetic_avatar(const SynthOptions& opts) {
  AvatarAsset asset;
  const std::size_t m = opts.splats;
  const Eigen::Vector3d radii = Eigen::Vector3d(0.8, 1.0, 0.9) * opts.radius;
  const double area = 4.0 * std::numbers::pi * opts.radius * opts.radius;
  const double spacing = m > 0 ? std::sqrt(area / static_cast<double>(m)) : opts.radius;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);

  asset.rest.gaussians.resize(m);
  std::vector<Eigen::Vector3d> unit_pts(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double y = 1.0 - 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = static_cast<double>(j) * golden;
    const Eigen::Vector3d u(r * std::sin(phi), y, r * std::cos(phi));
    unit_pts[j] = u;
    const Eigen::Vector3d p = u.cwiseProduct(radii);
    const Eigen::Vector3d normal = u.cwiseQuotient(radii).normalized();

    Gaussian g;
    for (int c = 0; c < 3; ++c) g.position[c] = static_cast<float>(p[c]);
    const double s = spacing * (0.55 + 0.1 * jitter(rng));
    g.scale = {static_cast<float>(s), static_cast<float>(s * (0.9 + 0.2 * (jitter(rng) + 0.5))),
               static_cast<float>(0.15 * s)};
    const Eigen::Quaterniond spin(Eigen::AngleAxisd(jitter(rng) * std::numbers::pi, Eigen::Vector3d::UnitZ()));
    g.orientation = to_quatf(Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), normal) * spin);
    const Eigen::Vector3d col = skin_color(u);
    for (int c = 0; c < 3; ++c) g.color[c] = clamp01(col[c] + 0.02 * jitter(rng));
    g.opacity = clamp01(0.92 + 0.08 * jitter(rng));
    asset.rest.gaussians[j] = g;
  }

  for (std::size_t i = 0; i < opts.channels; ++i) {
    const ChannelShape& shape = kShapes[i % 16];
    GaussianSet comp = asset.rest;
    for (std::size_t j = 0; j < m; ++j) {
      const double d2 = (unit_pts[j] - shape.center).squaredNorm();
      const double falloff = std::exp(-d2 / (2.0 * 0.12 * 0.12));
      if (falloff < 1e-4) continue;
      auto& g = comp.gaussians[j];
      for (int c = 0; c < 3; ++c) {
        g.position[c] = static_cast<float>(g.position[c] + falloff * shape.offset[c] * opts.radius);
        g.color[c] = clamp01(g.color[c] + falloff * shape.tint[c]);
      }
      const Eigen::Quaterniond tilt(Eigen::AngleAxisd(falloff * shape.tilt, Eigen::Vector3d::UnitX()));
      g.orientation = to_quatf(tilt * from_quatf(g.orientation));
    }
    asset.components.push_back(std::move(comp));
    asset.channel_names.emplace_back(i < 16 ? std::string(kFacsChannels[i]) : "channel" + std::to_string(i));
  }
  asset.metadata["generator"] = "synthetic";
  return asset;
}

GaussianSet make_random_set(std::size_t count, std::uint64_t seed, double extent) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianSet set;
  set.gaussians.resize(count);
  for (auto& g : set.gaussians) {
    for (float& p : g.position) p = static_cast<float>((2.0 * unit(rng) - 1.0) * extent);
    for (float& s : g.scale) s = static_cast<float>((0.05 + 0.25 * unit(rng)) * extent);
    Quatf q;
    for (float& c : q) c = static_cast<float>(normal(rng));
    g.orientation = normalize_quat(q);
    for (float& c : g.color) c = static_cast<float>(unit(rng));
    g.opacity = static_cast<float>(0.05 + 0.95 * unit(rng));
  }
  return set;
}

AvatarAsset make_random_asset(std::size_t splats, std::size_t channels, std::uint64_t seed) {
  AvatarAsset asset;
  asset.rest = make_random_set(splats, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < channels; ++i) {
    GaussianSet comp = asset.rest;
    for (auto& g : comp.gaussians) {
      for (float& p : g.position) p = static_cast<float>(p + 0.1 * normal(rng));
      for (float& s : g.scale) s = static_cast<float>(s * (0.8 + 0.4 * unit(rng)));
      Quatf q = g.orientation;
      for (float& c : q) c = static_cast<float>(c + 0.2 * normal(rng));
      g.orientation = normalize_quat(q);
      for (float& c : g.color) c = clamp01(c + 0.1 * normal(rng));
      g.opacity = clamp01(g.opacity + 0.1 * normal(rng));
    }
    asset.components.push_back(std::move(comp));
  }
  if (channels == kDefaultChannelCount) {
    asset.channel_names = default_channel_names();
  } else {
    for (std::size_t i = 0; i < channels; ++i) asset.channel_names.push_back("channel" + std::to_string(i));
  }
  return asset;
}

}  // namespace smoj
