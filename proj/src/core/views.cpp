// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "raster_internal.hpp"
#include "smoj/error.hpp"

namespace smoj::render {

std::vector<double> normals_from_depth(const std::vector<double>& depth, const std::vector<double>& alpha,
                                       const Camera& cam, double alpha_threshold) {
  const int w = cam.width, h = cam.height;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (depth.size() != n || alpha.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "normals_from_depth: buffer size does not match the camera");
  }
  std::vector<double> normals(3 * n, 0.0);
  auto valid = [&](int x, int y) { return alpha[static_cast<std::size_t>(y) * w + x] >= alpha_threshold; };
  auto point = [&](int x, int y) {
    const double d = depth[static_cast<std::size_t>(y) * w + x];
    return Eigen::Vector3d(d * (x - cam.cx) / cam.fx, d * (y - cam.cy) / cam.fy, d);
  };
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!valid(x, y) || !valid(x - 1, y) || !valid(x + 1, y) || !valid(x, y - 1) || !valid(x, y + 1)) continue;
      const Eigen::Vector3d tx = point(x + 1, y) - point(x - 1, y);
      const Eigen::Vector3d ty = point(x, y + 1) - point(x, y - 1);
      Eigen::Vector3d nrm = ty.cross(tx);
      const double len = nrm.norm();
      if (!(len > 0.0)) continue;
      nrm /= len;
      if (nrm.dot(point(x, y)) > 0.0) nrm = -nrm;
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) normals[3 * pix + c] = nrm[c];
    }
  }
  return normals;
}

std::vector<Camera> turntable_cameras(const GaussianSet& set, int n_views, double radius,
                                      const TurntableOptions& opts) {
  if (n_views < 1) throw Error(ErrorCode::kInvalidArgument, "turntable: need at least one view");
  if (set.empty()) throw Error(ErrorCode::kInvalidArgument, "turntable: degenerate (empty) set");
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "turntable: radius must be > 0");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& g : set.gaussians) centroid += Eigen::Vector3d(g.position[0], g.position[1], g.position[2]);
  centroid /= static_cast<double>(set.size());

  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(n_views));
  for (int i = 0; i < n_views; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n_views;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i;
    const Eigen::Vector3d dir(r * std::sin(phi), y, r * std::cos(phi));
    cams.push_back(Camera::look_at(centroid + radius * dir, centroid, Eigen::Vector3d::UnitY(), opts.width,
                                   opts.height, opts.fov_y));
  }
  return cams;
}

Turntable render_turntable(const GaussianSet& set, int n_views, double radius, const RenderConfig& cfg,
                           const TurntableOptions& opts) {
  Turntable out;
  out.cameras = turntable_cameras(set, n_views, radius, opts);
  for (const auto& cam : out.cameras) out.views.push_back(render(set, cam, cfg));
  return out;
}

}  // namespace smoj::render
