// SPDX-License-Identifier: Apache-2.0
//
// Gaussian avatar data model: a rest-pose splat set plus one full splat set
// per expression channel, all sharing splat count and ordering.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace smoj {

using Vec3f = std::array<float, 3>;
// Scalar-first (w, x, y, z).
using Quatf = std::array<float, 4>;

struct Gaussian {
  Vec3f position{0.f, 0.f, 0.f};
  Vec3f scale{1.f, 1.f, 1.f};
  Quatf orientation{1.f, 0.f, 0.f, 0.f};
  Vec3f color{0.f, 0.f, 0.f};
  float opacity = 1.f;

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

struct GaussianSet {
  std::vector<Gaussian> gaussians;

  std::size_t size() const noexcept { return gaussians.size(); }
  bool empty() const noexcept { return gaussians.empty(); }
  friend bool operator==(const GaussianSet&, const GaussianSet&) = default;
};

// The sixteen FACS channels of the default profile, in canonical order.
inline constexpr std::array<std::string_view, 16> kFacsChannels = {
    "browDownLeft",    "browDownRight",   "browUpLeft",       "browUpRight",
    "eyeBlinkLeft",    "eyeBlinkRight",   "jawOpen",          "jawLeft",
    "jawRight",        "lipsPucker",      "mouthFrownLeft",   "mouthFrownRight",
    "mouthSmileLeft",  "mouthSmileRight", "mouthStretchLeft", "mouthStretchRight",
};
inline constexpr std::size_t kDefaultChannelCount = kFacsChannels.size();

std::vector<std::string> default_channel_names();

struct AvatarAsset {
  GaussianSet rest;
  std::vector<GaussianSet> components;
  std::vector<std::string> channel_names;
  // Not serialized by the SMOJ format.
  std::map<std::string, std::string> metadata;

  std::size_t splat_count() const noexcept { return rest.size(); }
  std::size_t channel_count() const noexcept { return components.size(); }
};

struct BlendWeights {
  std::vector<float> weights;

  BlendWeights() = default;
  explicit BlendWeights(std::vector<float> w) : weights(std::move(w)) {}
  static BlendWeights zeros(std::size_t k) { return BlendWeights(std::vector<float>(k, 0.f)); }
  static BlendWeights one_hot(std::size_t k, std::size_t i) {
    BlendWeights w = zeros(k);
    w.weights.at(i) = 1.f;
    return w;
  }
  std::size_t size() const noexcept { return weights.size(); }
};

// Pinhole camera, OpenCV convention: x right, y down, +z forward. Pixel
// centers sit at integer coordinates.
struct Camera {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  // Camera at `eye` looking at `target`; `up` is the world up direction.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                        int width, int height, double fov_y_radians);
};

// Returns an empty string if the camera is usable, otherwise the reason.
std::string check_camera(const Camera& cam);

Quatf normalize_quat(const Quatf& q);
double quat_norm(const Quatf& q);

enum class ViolationKind {
  kChannelCount,
  kChannelNames,
  kSplatCount,
  kOrientation,
  kScale,
  kColor,
  kOpacity,
  kNonFinite,
};

struct Violation {
  ViolationKind kind;
  // -1 is the rest set, otherwise the component index.
  int set_index = -1;
  // Splat index, or -1 for set-level violations.
  long splat_index = -1;
  std::string message;
};

struct ValidationOptions {
  // When true, channel names must equal the FACS list and K must be 16.
  bool default_profile = true;
};

std::vector<Violation> validate_asset(const AvatarAsset& asset, const ValidationOptions& opts = {});
std::vector<Violation> validate_set(const GaussianSet& set, int set_index = -1);
std::string format_violation(const Violation& v);

struct FieldDelta {
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

struct ComponentDelta {
  std::string channel;
  FieldDelta position;
  FieldDelta scale;
  FieldDelta orientation;
  FieldDelta color;
  FieldDelta opacity;
  // Splats with any nonzero field delta.
  std::size_t changed_splats = 0;
};

// Per-component statistics of (component - rest). Mean is over all scalar
// entries of the field (M * arity).
std::vector<ComponentDelta> component_deltas(const AvatarAsset& asset);

}  // namespace smoj
