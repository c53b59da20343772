// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "smoj/render.hpp"

namespace smoj::render::detail {

// exp(-kFalloffCutoff / 2)
inline const double kCutoffValue = std::exp(-0.5 * kFalloffCutoff);

inline double falloff(double q) { return (std::exp(-0.5 * q) - kCutoffValue) / (1.0 - kCutoffValue); }
// dG/dq for q below the cutoff.
inline double falloff_slope(double q) { return -0.5 * std::exp(-0.5 * q) / (1.0 - kCutoffValue); }

// Rotation from a (w, x, y, z) quaternion, normalized internally.
Eigen::Matrix3d rotation_from_quat(const Quatf& q);
// Maps dL/dR (for R built from the normalized quaternion) to dL/dq of the raw
// stored quaternion.
std::array<double, 4> quat_gradient(const Quatf& q, const Eigen::Matrix3d& dR);

struct Projected {
  std::uint32_t index = 0;  // into the input set
  double depth = 0.0;       // camera-space center z
  double opacity = 0.0;
  double color[3] = {0, 0, 0};
  // Inclusive pixel bounding box of the footprint, clamped to the image.
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

  // Volumetric: projected mean and inverse 2D covariance [[a b] [b c]].
  double mx = 0, my = 0;
  double con_a = 0, con_b = 0, con_c = 0;

  // Surfel: camera-space center, scaled tangent axes, camera-facing normal.
  Eigen::Vector3d pc = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double normal_sign = 1.0;
};

struct Frame {
  const Camera* cam = nullptr;
  const RenderConfig* cfg = nullptr;
  std::vector<Projected> splats;  // visible splats in compositing order
};

// Projects, culls, and sorts by (center depth, index).
Frame prepare_frame(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg);

struct PixelEval {
  double g = 0.0;      // falloff
  double q = 0.0;      // squared Mahalanobis distance
  double depth = 0.0;  // per-splat depth at this pixel
  // Volumetric: pixel minus projected mean.
  double dx = 0.0, dy = 0.0;
  // Surfel: disk coordinates and ray parameter.
  double u = 0.0, v = 0.0, tau = 0.0;
};

// Returns false if the splat does not cover the pixel.
inline bool evaluate(const Projected& s, const Camera& cam, const RenderConfig& cfg, int px, int py,
                     PixelEval& e) {
  if (cfg.mode == Mode::kVolumetric) {
    e.dx = px - s.mx;
    e.dy = py - s.my;
    e.q = s.con_a * e.dx * e.dx + 2.0 * s.con_b * e.dx * e.dy + s.con_c * e.dy * e.dy;
    if (!(e.q < kFalloffCutoff)) return false;
    e.g = falloff(e.q);
    e.depth = s.depth;
    return true;
  }
  const Eigen::Vector3d r((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
  const Eigen::Vector3d& a = s.axis_u;
  const Eigen::Vector3d& b = s.axis_v;
  const Eigen::Vector3d bxr = b.cross(r);
  const double det = -a.dot(bxr);
  if (!(std::abs(det) > 1e-12 * a.norm() * b.norm() * r.norm())) return false;
  const Eigen::Vector3d y = -s.pc;
  e.u = -y.dot(bxr) / det;
  e.v = -y.dot(r.cross(a)) / det;
  e.tau = y.dot(a.cross(b)) / det;
  if (!(e.tau > cfg.near_plane)) return false;
  e.q = e.u * e.u + e.v * e.v;
  if (!(e.q < kFalloffCutoff)) return false;
  e.g = falloff(e.q);
  e.depth = e.tau;
  return true;
}

struct TileGrid {
  int tile = 16;
  int tiles_x = 0;
  int tiles_y = 0;
  // Per tile, indices into Frame::splats in compositing order.
  std::vector<std::vector<std::uint32_t>> lists;
};

TileGrid bin_tiles(const Frame& frame, int width, int height, int tile);

int resolve_threads(int requested);

// Runs fn(i) for i in [0, n). Work is split statically, so any per-index
// output is independent of the thread count.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  const int t = std::max(1, std::min(threads, n));
  if (t == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += t) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void check_render_inputs(const Camera& cam, const RenderConfig& cfg);

}  // namespace smoj::render::detail
