// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <type_traits>

#include "raster_internal.hpp"
#include "smoj/error.hpp"

namespace smoj::render {

namespace detail {

Eigen::Matrix3d rotation_from_quat(const Quatf& qf) {
  double w = qf[0], x = qf[1], y = qf[2], z = qf[3];
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0)) return Eigen::Matrix3d::Identity();
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<double, 4> quat_gradient(const Quatf& qf, const Eigen::Matrix3d& g) {
  double w = qf[0], x = qf[1], y = qf[2], z = qf[3];
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0)) return {0, 0, 0, 0};
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  // Partial derivatives of R entries with respect to the normalized components.
  const double dw = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  const double dx = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                         w * g(2, 1) - 2 * x * g(2, 2));
  const double dy = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                         z * g(2, 1) - 2 * y * g(2, 2));
  const double dz = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                         y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  // Chain through q_hat = q / |q|.
  const double dot = w * dw + x * dx + y * dy + z * dz;
  return {(dw - w * dot) / n, (dx - x * dot) / n, (dy - y * dot) / n, (dz - z * dot) / n};
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void check_render_inputs(const Camera& cam, const RenderConfig& cfg) {
  if (cam.width <= 0 || cam.height <= 0) throw Error(ErrorCode::kInvalidArgument, "render: zero-sized image");
  const std::string why = check_camera(cam);
  if (!why.empty()) throw Error(ErrorCode::kInvalidArgument, "render: invalid camera: " + why);
  if (cfg.tile_size < 1) throw Error(ErrorCode::kInvalidArgument, "render: tile size must be >= 1");
  if (!(cfg.saturation > 0.0 && cfg.saturation < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "render: saturation threshold must lie in (0,1)");
  }
  if (!(cfg.near_plane > 0.0)) throw Error(ErrorCode::kInvalidArgument, "render: near plane must be > 0");
}

namespace {

int clamp_pixel(double v, int hi) {
  if (!(v > 0.0)) return 0;
  if (v >= hi) return hi;
  return static_cast<int>(v);
}

void set_bbox(Projected& p, double xmin, double xmax, double ymin, double ymax, const Camera& cam) {
  // One pixel of margin absorbs rounding in the conic inverse.
  p.x0 = clamp_pixel(std::ceil(xmin - 1.0), cam.width);
  p.x1 = clamp_pixel(std::floor(xmax + 1.0), cam.width - 1);
  p.y0 = clamp_pixel(std::ceil(ymin - 1.0), cam.height);
  p.y1 = clamp_pixel(std::floor(ymax + 1.0), cam.height - 1);
  if (xmax < -1.0 || ymax < -1.0) {
    p.x1 = -1;
    p.y1 = -1;
  }
}

bool project_volumetric(const Gaussian& g, const Camera& cam, Projected& p) {
  const Eigen::Vector3d world(g.position[0], g.position[1], g.position[2]);
  const Eigen::Vector3d pc = cam.to_camera(world);
  const double x = pc.x(), y = pc.y(), z = pc.z();
  const Eigen::Matrix3d rot = rotation_from_quat(g.orientation);
  const Eigen::Vector3d s(g.scale[0], g.scale[1], g.scale[2]);
  const Eigen::Matrix3d m = rot * s.asDiagonal();
  const Eigen::Matrix3d cov_cam = cam.rotation * (m * m.transpose()) * cam.rotation.transpose();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
  Eigen::Matrix2d cov2 = jac * cov_cam * jac.transpose();
  cov2(0, 0) += kLowPassDilation;
  cov2(1, 1) += kLowPassDilation;
  const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
  if (!(det > 0.0) || !std::isfinite(det)) return false;
  p.con_a = cov2(1, 1) / det;
  p.con_b = -0.5 * (cov2(0, 1) + cov2(1, 0)) / det;
  p.con_c = cov2(0, 0) / det;
  p.mx = cam.fx * x / z + cam.cx;
  p.my = cam.fy * y / z + cam.cy;
  p.depth = z;
  const double rx = std::sqrt(kFalloffCutoff * cov2(0, 0));
  const double ry = std::sqrt(kFalloffCutoff * cov2(1, 1));
  set_bbox(p, p.mx - rx, p.mx + rx, p.my - ry, p.my + ry, cam);
  return true;
}

bool project_surfel(const Gaussian& g, const Camera& cam, const RenderConfig& cfg, Projected& p) {
  const Eigen::Vector3d world(g.position[0], g.position[1], g.position[2]);
  p.pc = cam.to_camera(world);
  p.depth = p.pc.z();
  const Eigen::Matrix3d rot = cam.rotation * rotation_from_quat(g.orientation);
  p.axis_u = g.scale[0] * rot.col(0);
  p.axis_v = g.scale[1] * rot.col(1);
  const Eigen::Vector3d n = rot.col(2);
  p.normal_sign = n.dot(p.pc) > 0.0 ? -1.0 : 1.0;
  p.normal = p.normal_sign * n;

  const double limit = std::sqrt(kFalloffCutoff);
  const Eigen::Vector3d half =
      limit * (p.axis_u.cwiseAbs2() + p.axis_v.cwiseAbs2()).cwiseSqrt();
  if (p.pc.z() - half.z() <= cfg.near_plane) {
    p.x0 = 0;
    p.x1 = cam.width - 1;
    p.y0 = 0;
    p.y1 = cam.height - 1;
    return true;
  }
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (int c = 0; c < 8; ++c) {
    const Eigen::Vector3d corner = p.pc + Eigen::Vector3d((c & 1) ? half.x() : -half.x(),
                                                          (c & 2) ? half.y() : -half.y(),
                                                          (c & 4) ? half.z() : -half.z());
    const double u = cam.fx * corner.x() / corner.z() + cam.cx;
    const double v = cam.fy * corner.y() / corner.z() + cam.cy;
    xmin = std::min(xmin, u);
    xmax = std::max(xmax, u);
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  set_bbox(p, xmin, xmax, ymin, ymax, cam);
  return true;
}

}  // namespace

Frame prepare_frame(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg) {
  Frame frame;
  frame.cam = &cam;
  frame.cfg = &cfg;
  std::vector<Projected> projected;
  projected.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Gaussian& g = set.gaussians[i];
    const Eigen::Vector3d pc = cam.to_camera(Eigen::Vector3d(g.position[0], g.position[1], g.position[2]));
    if (!(pc.z() > cfg.near_plane)) continue;
    if (!(g.opacity > 0.f)) continue;
    Projected p;
    p.index = static_cast<std::uint32_t>(i);
    p.opacity = g.opacity;
    for (int c = 0; c < 3; ++c) p.color[c] = g.color[c];
    const bool ok =
        cfg.mode == Mode::kVolumetric ? project_volumetric(g, cam, p) : project_surfel(g, cam, cfg, p);
    if (ok) projected.push_back(p);
  }
  // Indices are unique, so (depth, index) is a strict total order.
  std::vector<std::pair<double, std::uint32_t>> keys(projected.size());
  for (std::uint32_t k = 0; k < projected.size(); ++k) keys[k] = {projected[k].depth, k};
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && projected[a.second].index < projected[b.second].index);
  });
  frame.splats.reserve(projected.size());
  for (const auto& key : keys) frame.splats.push_back(projected[key.second]);
  return frame;
}

TileGrid bin_tiles(const Frame& frame, int width, int height, int tile) {
  TileGrid grid;
  grid.tile = tile;
  grid.tiles_x = (width + tile - 1) / tile;
  grid.tiles_y = (height + tile - 1) / tile;
  grid.lists.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
  for (std::uint32_t k = 0; k < frame.splats.size(); ++k) {
    const Projected& p = frame.splats[k];
    if (p.x1 < p.x0 || p.y1 < p.y0) continue;
    for (int ty = p.y0 / tile; ty <= p.y1 / tile; ++ty) {
      for (int tx = p.x0 / tile; tx <= p.x1 / tile; ++tx) {
        grid.lists[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(k);
      }
    }
  }
  return grid;
}

}  // namespace detail

namespace {

using detail::Frame;
using detail::PixelEval;
using detail::Projected;

struct PixelAccum {
  double transmittance = 1.0;
  double alpha = 0.0;
  double rgb[3] = {0, 0, 0};
  double depth_sum = 0.0;
  double normal[3] = {0, 0, 0};

  // Returns true once the pixel is saturated.
  bool add(double a, const double* color, double depth, const double* n, double saturation, bool early) {
    if (!(a > 0.0)) return false;
    const double w = a * transmittance;
    rgb[0] += w * color[0];
    rgb[1] += w * color[1];
    rgb[2] += w * color[2];
    alpha += w;
    depth_sum += w * depth;
    if (n) {
      normal[0] += w * n[0];
      normal[1] += w * n[1];
      normal[2] += w * n[2];
    }
    transmittance *= 1.0 - a;
    return early && alpha >= saturation;
  }

  bool add(const Projected& s, const PixelEval& e, bool surfel, double saturation, bool early) {
    return add(s.opacity * e.g, s.color, e.depth, surfel ? s.normal.data() : nullptr, saturation, early);
  }

  template <class T>
  void store(ImageBuffers<T>& out, std::size_t pix, const RenderConfig& cfg) const {
    for (int c = 0; c < 3; ++c) out.rgb[3 * pix + c] = static_cast<T>(rgb[c] + (1.0 - alpha) * cfg.background[c]);
    out.alpha[pix] = static_cast<T>(alpha);
    const bool covered = alpha >= kMinAlphaForDepth;
    out.depth[pix] = static_cast<T>(covered ? depth_sum / alpha : 0.0);
    const double n = std::sqrt(normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]);
    for (int c = 0; c < 3; ++c) out.normal[3 * pix + c] = static_cast<T>(covered && n > 0.0 ? normal[c] / n : 0.0);
  }
};

// Hot volumetric data for the tile loop, in compositing order. For a row at
// offset dy the covered span is mx - k1*dy -+ sqrt(r9 - k2*dy^2).
struct Conic {
  double mx, my, a, b, c;
  double opacity, depth;
  double color[3];
  double k1, k2, r9;
};

Conic make_conic(const Projected& p) {
  Conic c{p.mx, p.my, p.con_a, p.con_b, p.con_c, p.opacity, p.depth, {p.color[0], p.color[1], p.color[2]}, 0, 0, 0};
  c.k1 = p.con_b / p.con_a;
  c.k2 = (p.con_a * p.con_c - p.con_b * p.con_b) / (p.con_a * p.con_a);
  c.r9 = kFalloffCutoff / p.con_a;
  return c;
}

struct Bounds {
  int x0, x1, y0, y1;
};

// exp(x) for x in [-cutoff/2, 0] as (e^(x/8))^8 with a degree-9 Taylor
// polynomial; relative error below 1e-8 and branch-free.
inline double exp_neg(double x) {
  const double r = 0.125 * x;
  double p = 1.0 / 362880;
  p = p * r + 1.0 / 40320;
  p = p * r + 1.0 / 5040;
  p = p * r + 1.0 / 720;
  p = p * r + 1.0 / 120;
  p = p * r + 1.0 / 24;
  p = p * r + 1.0 / 6;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  p *= p;
  p *= p;
  return p * p;
}

// The float output path uses the fast kernel; the double path matches the
// backward pass exactly.
template <class T>
double falloff_fast(double q) {
  if constexpr (std::is_same_v<T, float>) {
    return (exp_neg(-0.5 * std::min(q, kFalloffCutoff)) - detail::kCutoffValue) / (1.0 - detail::kCutoffValue);
  } else {
    return detail::falloff(q);
  }
}

inline int ceil_nonneg(double v) {
  if (!(v > 0.0)) return 0;
  const int i = static_cast<int>(v);
  return i < v ? i + 1 : i;
}

// Narrows [x0, x1] to the pixels of row py that can satisfy q < cutoff, with
// a margin far above rounding error. Returns false if none can.
bool row_span(const Conic& s, int py, int& x0, int& x1) {
  const double dy = py - s.my;
  const double rem = s.r9 - s.k2 * dy * dy;
  if (rem < -1e-9 * s.r9) return false;
  const double root = std::sqrt(std::max(rem, 0.0));
  const double mid = s.mx - s.k1 * dy;
  const double lo = mid - root - 1e-3;
  const double hi = mid + root + 1e-3;
  if (!(lo <= hi)) return true;
  if (hi < 0.0) return false;
  x0 = std::max(x0, ceil_nonneg(lo));
  if (hi < x1) x1 = static_cast<int>(hi);
  return x0 <= x1;
}

template <class T>
ImageBuffers<T> allocate(const Camera& cam) {
  ImageBuffers<T> out;
  out.width = cam.width;
  out.height = cam.height;
  const std::size_t n = out.pixels();
  out.rgb.assign(3 * n, T(0));
  out.alpha.assign(n, T(0));
  out.depth.assign(n, T(0));
  out.normal.assign(3 * n, T(0));
  return out;
}

template <class T>
void surfel_tile(const Frame& frame, const std::vector<std::uint32_t>& list, const std::vector<Bounds>& bounds,
                 int x_begin, int x_end, int y_begin, int y_end, const Camera& cam, const RenderConfig& cfg,
                 ImageBuffers<T>& out) {
  const int tw = x_end - x_begin;
  std::vector<PixelAccum> acc(static_cast<std::size_t>(tw) * (y_end - y_begin));
  std::vector<std::uint8_t> done(acc.size(), 0);
  std::size_t remaining = acc.size();
  PixelEval e;
  for (std::uint32_t k : list) {
    const int sx0 = std::max(bounds[k].x0, x_begin), sx1 = std::min(bounds[k].x1, x_end - 1);
    const int sy0 = std::max(bounds[k].y0, y_begin), sy1 = std::min(bounds[k].y1, y_end - 1);
    const Projected& s = frame.splats[k];
    for (int py = sy0; py <= sy1; ++py) {
      const std::size_t row = static_cast<std::size_t>(py - y_begin) * tw;
      for (int px = sx0; px <= sx1; ++px) {
        const std::size_t i = row + static_cast<std::size_t>(px - x_begin);
        if (done[i]) continue;
        if (!detail::evaluate(s, cam, cfg, px, py, e)) continue;
        if (acc[i].add(s, e, true, cfg.saturation, cfg.early_termination)) {
          done[i] = 1;
          --remaining;
        }
      }
    }
    if (remaining == 0) break;
  }
  for (int py = y_begin; py < y_end; ++py) {
    for (int px = x_begin; px < x_end; ++px) {
      acc[static_cast<std::size_t>(py - y_begin) * tw + (px - x_begin)].store(
          out, static_cast<std::size_t>(py) * cam.width + px, cfg);
    }
  }
}

// Volumetric tile with structure-of-arrays accumulators, processed in
// fixed-width lane groups. Masked lanes add exact zeros, so every pixel gets
// the same arithmetic as a per-pixel loop.
template <class T>
void volumetric_tile(const std::vector<Conic>& conics, const std::vector<std::uint32_t>& list,
                     const std::vector<Bounds>& bounds, int x_begin, int x_end, int y_begin, int y_end,
                     const RenderConfig& cfg, ImageBuffers<T>& out) {
  constexpr int kLanes = 4;
  const int tw = x_end - x_begin;
  const int th = y_end - y_begin;
  const int stride = tw + kLanes;
  const std::size_t n = static_cast<std::size_t>(stride) * th;
  std::vector<double> buf(7 * n, 0.0);
  double* trans = buf.data();
  double* alpha = trans + n;
  double* red = alpha + n;
  double* green = red + n;
  double* blue = green + n;
  double* depth = blue + n;
  double* live = depth + n;
  std::fill(trans, trans + n, 1.0);
  std::fill(live, live + n, 1.0);
  const double saturation = cfg.saturation;
  const bool early = cfg.early_termination;
  std::size_t since_check = 0;
  // Live column range per row, refreshed periodically.
  std::vector<int> row_lo(static_cast<std::size_t>(th), 0), row_hi(static_cast<std::size_t>(th), tw - 1);

  for (std::uint32_t k : list) {
    const Conic& s = conics[k];
    const int sx0 = std::max(bounds[k].x0, x_begin), sx1 = std::min(bounds[k].x1, x_end - 1);
    const int sy0 = std::max(bounds[k].y0, y_begin), sy1 = std::min(bounds[k].y1, y_end - 1);
    for (int py = sy0; py <= sy1; ++py) {
      const std::size_t r = static_cast<std::size_t>(py - y_begin);
      int rx0 = std::max(sx0, x_begin + row_lo[r]), rx1 = std::min(sx1, x_begin + row_hi[r]);
      if (rx0 > rx1) continue;
      if (!row_span(s, py, rx0, rx1)) continue;
      const double dy = py - s.my;
      const double qy = s.c * dy * dy;
      const std::size_t row = static_cast<std::size_t>(py - y_begin) * stride;
      for (int px = rx0; px <= rx1; px += kLanes) {
        const std::size_t i0 = row + static_cast<std::size_t>(px - x_begin);
        double* tr = trans + i0;
        double* al = alpha + i0;
        double* cr = red + i0;
        double* cg = green + i0;
        double* cb = blue + i0;
        double* dp = depth + i0;
        double* lv = live + i0;
        for (int j = 0; j < kLanes; ++j) {
          const double dx = (px + j) - s.mx;
          const double q = s.a * dx * dx + 2.0 * s.b * dx * dy + qy;
          const double raw = s.opacity * falloff_fast<T>(q);
          const bool on = (px + j <= rx1) && q < kFalloffCutoff && lv[j] != 0.0 && raw > 0.0;
          const double a = on ? raw : 0.0;
          const double w = a * tr[j];
          cr[j] += w * s.color[0];
          cg[j] += w * s.color[1];
          cb[j] += w * s.color[2];
          al[j] += w;
          dp[j] += w * s.depth;
          tr[j] *= 1.0 - a;
          lv[j] = (on && early && al[j] >= saturation) ? 0.0 : lv[j];
        }
      }
    }
    if (early && ++since_check >= 8) {
      since_check = 0;
      bool any = false;
      for (int py = 0; py < th; ++py) {
        const double* lv = live + static_cast<std::size_t>(py) * stride;
        int& lo = row_lo[static_cast<std::size_t>(py)];
        int& hi = row_hi[static_cast<std::size_t>(py)];
        while (lo <= hi && lv[lo] == 0.0) ++lo;
        while (hi >= lo && lv[hi] == 0.0) --hi;
        any = any || lo <= hi;
      }
      if (!any) break;
    }
  }

  for (int py = 0; py < th; ++py) {
    for (int px = 0; px < tw; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * stride + px;
      PixelAccum acc;
      acc.transmittance = trans[i];
      acc.alpha = alpha[i];
      acc.rgb[0] = red[i];
      acc.rgb[1] = green[i];
      acc.rgb[2] = blue[i];
      acc.depth_sum = depth[i];
      acc.store(out, static_cast<std::size_t>(y_begin + py) * out.width + (x_begin + px), cfg);
    }
  }
}

template <class T>
ImageBuffers<T> render_tiled(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg) {
  detail::check_render_inputs(cam, cfg);
  const Frame frame = detail::prepare_frame(set, cam, cfg);
  const detail::TileGrid grid = detail::bin_tiles(frame, cam.width, cam.height, cfg.tile_size);
  ImageBuffers<T> out = allocate<T>(cam);
  const bool surfel = cfg.mode == Mode::kSurfel;
  std::vector<Conic> conics(surfel ? 0 : frame.splats.size());
  std::vector<Bounds> bounds(frame.splats.size());
  for (std::size_t k = 0; k < frame.splats.size(); ++k) {
    const Projected& p = frame.splats[k];
    bounds[k] = {p.x0, p.x1, p.y0, p.y1};
    if (!surfel) {
      conics[k] = make_conic(p);
    }
  }

  // Splat-major within a tile: each pixel still sees its splats in
  // compositing order, but only splats whose box covers it are visited.
  const int n_tiles = grid.tiles_x * grid.tiles_y;
  detail::parallel_for(n_tiles, detail::resolve_threads(cfg.threads), [&](int t) {
    const auto& list = grid.lists[static_cast<std::size_t>(t)];
    const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
    const int x_begin = tx * grid.tile, y_begin = ty * grid.tile;
    const int x_end = std::min(cam.width, x_begin + grid.tile);
    const int y_end = std::min(cam.height, y_begin + grid.tile);
    if (surfel) {
      surfel_tile(frame, list, bounds, x_begin, x_end, y_begin, y_end, cam, cfg, out);
    } else {
      volumetric_tile<T>(conics, list, bounds, x_begin, x_end, y_begin, y_end, cfg, out);
    }
  });
  return out;
}

}  // namespace

RenderOutput render(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg) {
  return render_tiled<float>(set, cam, cfg);
}

PreciseOutput render_precise(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg) {
  return render_tiled<double>(set, cam, cfg);
}

RenderOutput render_reference(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg,
                              std::size_t max_splats) {
  if (set.size() > max_splats) {
    throw Error(ErrorCode::kInvalidArgument, "render_reference: " + std::to_string(set.size()) +
                                                 " splats exceeds cap " + std::to_string(max_splats));
  }
  detail::check_render_inputs(cam, cfg);
  const Frame frame = detail::prepare_frame(set, cam, cfg);
  RenderOutput out = allocate<float>(cam);
  const bool surfel = cfg.mode == Mode::kSurfel;
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      PixelAccum acc;
      PixelEval e;
      for (const Projected& s : frame.splats) {
        if (!detail::evaluate(s, cam, cfg, px, py, e)) continue;
        acc.add(s, e, surfel, cfg.saturation, false);
      }
      acc.store(out, static_cast<std::size_t>(py) * cam.width + px, cfg);
    }
  }
  return out;
}

RenderOutput to_float(const PreciseOutput& in) {
  RenderOutput out;
  out.width = in.width;
  out.height = in.height;
  auto conv = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  out.rgb = conv(in.rgb);
  out.alpha = conv(in.alpha);
  out.depth = conv(in.depth);
  out.normal = conv(in.normal);
  return out;
}

RayDistortionInput capture_rays(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg) {
  detail::check_render_inputs(cam, cfg);
  const Frame frame = detail::prepare_frame(set, cam, cfg);
  const detail::TileGrid grid = detail::bin_tiles(frame, cam.width, cam.height, cfg.tile_size);
  RayDistortionInput rays;
  rays.rays.resize(static_cast<std::size_t>(cam.width) * cam.height);
  const int n_tiles = grid.tiles_x * grid.tiles_y;
  detail::parallel_for(n_tiles, detail::resolve_threads(cfg.threads), [&](int t) {
    const auto& list = grid.lists[static_cast<std::size_t>(t)];
    const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
    for (int py = ty * grid.tile; py < std::min(cam.height, (ty + 1) * grid.tile); ++py) {
      for (int px = tx * grid.tile; px < std::min(cam.width, (tx + 1) * grid.tile); ++px) {
        auto& ray = rays.rays[static_cast<std::size_t>(py) * cam.width + px];
        double trans = 1.0, alpha = 0.0;
        PixelEval e;
        for (std::uint32_t k : list) {
          const Projected& s = frame.splats[k];
          if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
          if (!detail::evaluate(s, cam, cfg, px, py, e)) continue;
          const double a = s.opacity * e.g;
          if (!(a > 0.0)) continue;
          const double w = a * trans;
          ray.push_back({w, e.depth});
          alpha += w;
          trans *= 1.0 - a;
          if (cfg.early_termination && alpha >= cfg.saturation) break;
        }
      }
    }
  });
  return rays;
}

}  // namespace smoj::render
