// SPDX-License-Identifier: Apache-2.0
#include "smoj/avatar.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>

namespace smoj {

std::vector<std::string> default_channel_names() {
  return {kFacsChannels.begin(), kFacsChannels.end()};
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       int width, int height, double fov_y_radians) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) {
    // Looking straight along `up`; pick any perpendicular.
    right = forward.unitOrthogonal();
  }
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);

  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_radians);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

std::string check_camera(const Camera& cam) {
  if (cam.width <= 0 || cam.height <= 0) return "zero-sized image";
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) return "focal lengths must be positive";
  if (!cam.rotation.allFinite() || !cam.translation.allFinite() || !std::isfinite(cam.cx) ||
      !std::isfinite(cam.cy))
    return "non-finite camera parameters";
  const Eigen::Matrix3d gram = cam.rotation * cam.rotation.transpose();
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) return "rotation is not orthonormal";
  if (cam.rotation.determinant() < 0.0) return "rotation is a reflection";
  return {};
}

double quat_norm(const Quatf& q) {
  double s = 0.0;
  for (float c : q) s += static_cast<double>(c) * c;
  return std::sqrt(s);
}

Quatf normalize_quat(const Quatf& q) {
  const double n = quat_norm(q);
  if (!(n > 0.0) || !std::isfinite(n)) return {1.f, 0.f, 0.f, 0.f};
  // Already unit to f32 precision: returning it unchanged makes this idempotent.
  if (std::abs(n - 1.0) <= 1e-6) return q;
  Quatf out;
  for (int i = 0; i < 4; ++i) out[i] = static_cast<float>(q[i] / n);
  return out;
}

namespace {

bool finite3(const Vec3f& v) { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); }

std::string where(int set_index, long splat) {
  std::ostringstream os;
  os << (set_index < 0 ? std::string("rest") : "component " + std::to_string(set_index));
  if (splat >= 0) os << " splat " << splat;
  return os.str();
}

}  // namespace

std::vector<Violation> validate_set(const GaussianSet& set, int set_index) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind kind, long j, const std::string& msg) {
    out.push_back({kind, set_index, j, where(set_index, j) + ": " + msg});
  };
  for (std::size_t idx = 0; idx < set.size(); ++idx) {
    const auto& g = set.gaussians[idx];
    const long j = static_cast<long>(idx);
    const bool finite = finite3(g.position) && finite3(g.scale) && finite3(g.color) && std::isfinite(g.opacity) &&
                        std::isfinite(g.orientation[0]) && std::isfinite(g.orientation[1]) &&
                        std::isfinite(g.orientation[2]) && std::isfinite(g.orientation[3]);
    if (!finite) {
      add(ViolationKind::kNonFinite, j, "non-finite field");
      continue;
    }
    if (std::abs(quat_norm(g.orientation) - 1.0) > 1e-6) {
      add(ViolationKind::kOrientation, j, "orientation norm " + std::to_string(quat_norm(g.orientation)));
    }
    if (!(g.scale[0] > 0.f && g.scale[1] > 0.f && g.scale[2] > 0.f)) {
      add(ViolationKind::kScale, j, "scale must be strictly positive");
    }
    for (float c : g.color) {
      if (c < 0.f || c > 1.f) {
        add(ViolationKind::kColor, j, "color component " + std::to_string(c) + " outside [0,1]");
        break;
      }
    }
    if (g.opacity < 0.f || g.opacity > 1.f) {
      add(ViolationKind::kOpacity, j, "opacity " + std::to_string(g.opacity) + " outside [0,1]");
    }
  }
  return out;
}

std::vector<Violation> validate_asset(const AvatarAsset& asset, const ValidationOptions& opts) {
  std::vector<Violation> out;
  const std::size_t k = asset.components.size();
  if (asset.channel_names.size() != k) {
    out.push_back({ViolationKind::kChannelCount, -1, -1,
                   "channel name count " + std::to_string(asset.channel_names.size()) +
                       " != component count " + std::to_string(k)});
  }
  if (opts.default_profile) {
    if (k != kDefaultChannelCount) {
      out.push_back({ViolationKind::kChannelCount, -1, -1,
                     "default profile requires " + std::to_string(kDefaultChannelCount) + " components, found " +
                         std::to_string(k)});
    } else if (asset.channel_names != default_channel_names()) {
      out.push_back({ViolationKind::kChannelNames, -1, -1, "channel names differ from the FACS list"});
    }
  }

  auto rest = validate_set(asset.rest, -1);
  out.insert(out.end(), rest.begin(), rest.end());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& comp = asset.components[i];
    if (comp.size() != asset.rest.size()) {
      out.push_back({ViolationKind::kSplatCount, static_cast<int>(i), -1,
                     where(static_cast<int>(i), -1) + ": splat count " + std::to_string(comp.size()) +
                         " != rest " + std::to_string(asset.rest.size())});
      continue;
    }
    auto v = validate_set(comp, static_cast<int>(i));
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::string format_violation(const Violation& v) { return v.message; }

namespace {

template <std::size_t N>
void accumulate(FieldDelta& d, const std::array<float, N>& a, const std::array<float, N>& b, bool& changed) {
  for (std::size_t c = 0; c < N; ++c) {
    const double diff = std::abs(static_cast<double>(a[c]) - static_cast<double>(b[c]));
    d.max_abs = std::max(d.max_abs, diff);
    d.mean_abs += diff;
    changed = changed || diff != 0.0;
  }
}

}  // namespace

std::vector<ComponentDelta> component_deltas(const AvatarAsset& asset) {
  std::vector<ComponentDelta> out;
  const std::size_t m = asset.rest.size();
  for (std::size_t i = 0; i < asset.components.size(); ++i) {
    ComponentDelta cd;
    cd.channel = i < asset.channel_names.size() ? asset.channel_names[i] : std::to_string(i);
    const auto& comp = asset.components[i];
    const std::size_t n = std::min(m, comp.size());
    for (std::size_t j = 0; j < n; ++j) {
      const auto& r = asset.rest.gaussians[j];
      const auto& c = comp.gaussians[j];
      bool changed = false;
      accumulate(cd.position, c.position, r.position, changed);
      accumulate(cd.scale, c.scale, r.scale, changed);
      accumulate(cd.orientation, c.orientation, r.orientation, changed);
      accumulate(cd.color, c.color, r.color, changed);
      accumulate(cd.opacity, std::array<float, 1>{c.opacity}, std::array<float, 1>{r.opacity}, changed);
      if (changed) ++cd.changed_splats;
    }
    if (n > 0) {
      cd.position.mean_abs /= 3.0 * n;
      cd.scale.mean_abs /= 3.0 * n;
      cd.orientation.mean_abs /= 4.0 * n;
      cd.color.mean_abs /= 3.0 * n;
      cd.opacity.mean_abs /= static_cast<double>(n);
    }
    out.push_back(cd);
  }
  return out;
}

}  // namespace smoj
