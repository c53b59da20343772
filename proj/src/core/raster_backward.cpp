// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradients of the rasterizer. Each pixel replays its forward
// compositing list, then walks it back to front; gradients are first
// accumulated on screen-space intermediates per tile, reduced in tile order,
// and finally pulled back to the Gaussian fields once per splat.
#include <cmath>

#include "raster_internal.hpp"
#include "smoj/error.hpp"

namespace smoj::render {

namespace {

using detail::Frame;
using detail::PixelEval;
using detail::Projected;

struct ScreenGrad {
  // Volumetric: projected mean, conic entries, center depth.
  double mx = 0, my = 0, con_a = 0, con_b = 0, con_c = 0, depth = 0;
  // Surfel: camera-space center, scaled axes, facing normal.
  Eigen::Vector3d pc = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double color[3] = {0, 0, 0};
  double opacity = 0;

  void add(const ScreenGrad& o) {
    mx += o.mx;
    my += o.my;
    con_a += o.con_a;
    con_b += o.con_b;
    con_c += o.con_c;
    depth += o.depth;
    pc += o.pc;
    axis_u += o.axis_u;
    axis_v += o.axis_v;
    normal += o.normal;
    for (int c = 0; c < 3; ++c) color[c] += o.color[c];
    opacity += o.opacity;
  }
};

struct Contribution {
  std::uint32_t slot;  // position in the tile list
  double alpha;
  double transmittance;
  PixelEval eval;
};

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_upstream(const UpstreamGradients& up, std::size_t pixels) {
  auto ok = [](const std::vector<double>& v, std::size_t n) { return v.empty() || v.size() == n; };
  if (!ok(up.rgb, 3 * pixels) || !ok(up.alpha, pixels) || !ok(up.depth, pixels) || !ok(up.normal, 3 * pixels)) {
    throw Error(ErrorCode::kInvalidArgument, "backprop_render: upstream gradient size mismatch");
  }
}

SplatGradient pull_back_volumetric(const Gaussian& g, const Projected& p, const ScreenGrad& sg, const Camera& cam) {
  SplatGradient out;
  const Eigen::Vector3d pc = cam.to_camera(Eigen::Vector3d(g.position[0], g.position[1], g.position[2]));
  const double x = pc.x(), y = pc.y(), z = pc.z();
  const Eigen::Matrix3d rot = detail::rotation_from_quat(g.orientation);
  const Eigen::Vector3d s(g.scale[0], g.scale[1], g.scale[2]);
  const Eigen::Matrix3d m = rot * s.asDiagonal();
  const Eigen::Matrix3d& w = cam.rotation;
  const Eigen::Matrix3d cov_cam = w * (m * m.transpose()) * w.transpose();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);

  Eigen::Matrix2d con;
  con << p.con_a, p.con_b, p.con_b, p.con_c;
  Eigen::Matrix2d g_con;
  g_con << sg.con_a, 0.5 * sg.con_b, 0.5 * sg.con_b, sg.con_c;
  const Eigen::Matrix2d g_cov2 = -con * g_con * con;
  const Eigen::Matrix3d g_cov_cam = jac.transpose() * g_cov2 * jac;
  const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2 * jac * cov_cam;

  Eigen::Vector3d g_pc = Eigen::Vector3d::Zero();
  g_pc.x() += sg.mx * cam.fx / z;
  g_pc.z() += -sg.mx * cam.fx * x / (z * z);
  g_pc.y() += sg.my * cam.fy / z;
  g_pc.z() += -sg.my * cam.fy * y / (z * z);
  g_pc.z() += g_jac(0, 0) * (-cam.fx / (z * z));
  g_pc.x() += g_jac(0, 2) * (-cam.fx / (z * z));
  g_pc.z() += g_jac(0, 2) * (2.0 * cam.fx * x / (z * z * z));
  g_pc.z() += g_jac(1, 1) * (-cam.fy / (z * z));
  g_pc.y() += g_jac(1, 2) * (-cam.fy / (z * z));
  g_pc.z() += g_jac(1, 2) * (2.0 * cam.fy * y / (z * z * z));
  g_pc.z() += sg.depth;
  const Eigen::Vector3d g_world = w.transpose() * g_pc;
  for (int c = 0; c < 3; ++c) out.position[c] = g_world[c];

  const Eigen::Matrix3d g_cov = w.transpose() * g_cov_cam * w;
  const Eigen::Matrix3d g_m = 2.0 * g_cov * m;
  Eigen::Matrix3d g_rot;
  for (int j = 0; j < 3; ++j) {
    g_rot.col(j) = g_m.col(j) * s[j];
    out.scale[j] = g_m.col(j).dot(rot.col(j));
  }
  out.orientation = detail::quat_gradient(g.orientation, g_rot);
  return out;
}

SplatGradient pull_back_surfel(const Gaussian& g, const Projected& p, const ScreenGrad& sg, const Camera& cam) {
  SplatGradient out;
  const Eigen::Matrix3d& w = cam.rotation;
  const Eigen::Matrix3d rot_cam = w * detail::rotation_from_quat(g.orientation);
  out.scale[0] = sg.axis_u.dot(rot_cam.col(0));
  out.scale[1] = sg.axis_v.dot(rot_cam.col(1));
  out.scale[2] = 0.0;
  Eigen::Matrix3d g_rot_cam;
  g_rot_cam.col(0) = g.scale[0] * sg.axis_u;
  g_rot_cam.col(1) = g.scale[1] * sg.axis_v;
  g_rot_cam.col(2) = p.normal_sign * sg.normal;
  out.orientation = detail::quat_gradient(g.orientation, w.transpose() * g_rot_cam);
  const Eigen::Vector3d g_world = w.transpose() * sg.pc;
  for (int c = 0; c < 3; ++c) out.position[c] = g_world[c];
  return out;
}

}  // namespace

BackwardResult backprop_render(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg,
                               const UpstreamGradients& up) {
  detail::check_render_inputs(cam, cfg);
  const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
  check_upstream(up, pixels);

  const Frame frame = detail::prepare_frame(set, cam, cfg);
  const detail::TileGrid grid = detail::bin_tiles(frame, cam.width, cam.height, cfg.tile_size);
  const bool surfel = cfg.mode == Mode::kSurfel;
  const int n_tiles = grid.tiles_x * grid.tiles_y;
  const double lambda = up.distortion_weight;

  std::vector<std::vector<ScreenGrad>> tile_grads(static_cast<std::size_t>(n_tiles));
  std::vector<double> tile_dist(static_cast<std::size_t>(n_tiles), 0.0);

  detail::parallel_for(n_tiles, detail::resolve_threads(cfg.threads), [&](int t) {
    const auto& list = grid.lists[static_cast<std::size_t>(t)];
    auto& local = tile_grads[static_cast<std::size_t>(t)];
    local.assign(list.size(), ScreenGrad{});
    if (list.empty()) return;
    std::vector<Contribution> contribs;
    std::vector<double> dist_w, dist_d;
    double dist_sum = 0.0;
    const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
    const int x_end = std::min(cam.width, (tx + 1) * grid.tile);
    const int y_end = std::min(cam.height, (ty + 1) * grid.tile);

    for (int py = ty * grid.tile; py < y_end; ++py) {
      for (int px = tx * grid.tile; px < x_end; ++px) {
        const std::size_t pix = static_cast<std::size_t>(py) * cam.width + px;
        contribs.clear();
        double trans = 1.0, alpha = 0.0, depth_sum = 0.0;
        Eigen::Vector3d nsum = Eigen::Vector3d::Zero();
        PixelEval e;
        for (std::uint32_t slot = 0; slot < list.size(); ++slot) {
          const Projected& s = frame.splats[list[slot]];
          if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
          if (!detail::evaluate(s, cam, cfg, px, py, e)) continue;
          const double a = s.opacity * e.g;
          if (!(a > 0.0)) continue;
          const double wgt = a * trans;
          contribs.push_back({slot, a, trans, e});
          alpha += wgt;
          depth_sum += wgt * e.depth;
          if (surfel) nsum += wgt * s.normal;
          trans *= 1.0 - a;
          if (cfg.early_termination && alpha >= cfg.saturation) break;
        }
        if (contribs.empty()) continue;

        double g_rgb[3] = {0, 0, 0};
        if (!up.rgb.empty()) {
          for (int c = 0; c < 3; ++c) g_rgb[c] = up.rgb[3 * pix + c];
        }
        double g_alpha = up.alpha.empty() ? 0.0 : up.alpha[pix];
        for (int c = 0; c < 3; ++c) g_alpha -= g_rgb[c] * cfg.background[c];
        double g_depth_sum = 0.0;
        Eigen::Vector3d g_nsum = Eigen::Vector3d::Zero();
        if (alpha >= kMinAlphaForDepth) {
          if (!up.depth.empty()) {
            g_depth_sum = up.depth[pix] / alpha;
            g_alpha -= up.depth[pix] * depth_sum / (alpha * alpha);
          }
          const double nlen = nsum.norm();
          if (!up.normal.empty() && nlen > 0.0) {
            const Eigen::Vector3d nhat = nsum / nlen;
            const Eigen::Vector3d gn(up.normal[3 * pix], up.normal[3 * pix + 1], up.normal[3 * pix + 2]);
            g_nsum = (gn - nhat * nhat.dot(gn)) / nlen;
          }
        }

        const std::size_t n = contribs.size();
        dist_w.assign(n, 0.0);
        dist_d.assign(n, 0.0);
        if (lambda != 0.0) {
          for (std::size_t k = 0; k < n; ++k) {
            const double wk = contribs[k].alpha * contribs[k].transmittance;
            const double dk = contribs[k].eval.depth;
            double sw = 0.0, ss = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double wj = contribs[j].alpha * contribs[j].transmittance;
              const double diff = dk - contribs[j].eval.depth;
              sw += wj * std::abs(diff);
              ss += wj * sign(diff);
            }
            dist_sum += lambda * wk * sw;
            dist_w[k] = 2.0 * lambda * sw;
            dist_d[k] = 2.0 * lambda * wk * ss;
          }
        }

        double suffix = 0.0;
        const Eigen::Vector3d ray((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
        for (std::size_t k = n; k-- > 0;) {
          const Contribution& ct = contribs[k];
          const Projected& s = frame.splats[list[ct.slot]];
          ScreenGrad& sg = local[ct.slot];
          const double wgt = ct.alpha * ct.transmittance;
          const double dk = ct.eval.depth;

          double dl_dw = g_alpha + g_depth_sum * dk + dist_w[k];
          for (int c = 0; c < 3; ++c) {
            dl_dw += g_rgb[c] * s.color[c];
            sg.color[c] += g_rgb[c] * wgt;
          }
          if (surfel) {
            dl_dw += g_nsum.dot(s.normal);
            sg.normal += g_nsum * wgt;
          }
          const double g_dk = g_depth_sum * wgt + dist_d[k];

          const double g_a = ct.transmittance * (dl_dw - suffix);
          suffix = dl_dw * ct.alpha + (1.0 - ct.alpha) * suffix;

          sg.opacity += g_a * ct.eval.g;
          const double g_q = g_a * s.opacity * detail::falloff_slope(ct.eval.q);
          if (!surfel) {
            const double dx = ct.eval.dx, dy = ct.eval.dy;
            sg.mx += g_q * -2.0 * (s.con_a * dx + s.con_b * dy);
            sg.my += g_q * -2.0 * (s.con_b * dx + s.con_c * dy);
            sg.con_a += g_q * dx * dx;
            sg.con_b += g_q * 2.0 * dx * dy;
            sg.con_c += g_q * dy * dy;
            sg.depth += g_dk;
          } else {
            const Eigen::Vector3d& a = s.axis_u;
            const Eigen::Vector3d& b = s.axis_v;
            const double det = -a.dot(b.cross(ray));
            const double gu = g_q * 2.0 * ct.eval.u;
            const double gv = g_q * 2.0 * ct.eval.v;
            const Eigen::Vector3d lam =
                (gu * b.cross(-ray) + gv * (-ray).cross(a) + g_dk * a.cross(b)) / det;
            sg.pc -= lam;
            sg.axis_u -= lam * ct.eval.u;
            sg.axis_v -= lam * ct.eval.v;
          }
        }
      }
    }
    tile_dist[static_cast<std::size_t>(t)] = dist_sum;
  });

  std::vector<ScreenGrad> screen(frame.splats.size());
  BackwardResult result;
  for (int t = 0; t < n_tiles; ++t) {
    const auto& list = grid.lists[static_cast<std::size_t>(t)];
    const auto& local = tile_grads[static_cast<std::size_t>(t)];
    for (std::size_t slot = 0; slot < list.size(); ++slot) screen[list[slot]].add(local[slot]);
    result.distortion_loss += tile_dist[static_cast<std::size_t>(t)];
  }

  result.gradients.assign(set.size(), SplatGradient{});
  for (std::size_t k = 0; k < frame.splats.size(); ++k) {
    const Projected& p = frame.splats[k];
    const Gaussian& g = set.gaussians[p.index];
    const ScreenGrad& sg = screen[k];
    SplatGradient grad = surfel ? pull_back_surfel(g, p, sg, cam) : pull_back_volumetric(g, p, sg, cam);
    for (int c = 0; c < 3; ++c) grad.color[c] = sg.color[c];
    grad.opacity = sg.opacity;
    result.gradients[p.index] = grad;
  }
  return result;
}

}  // namespace smoj::render
