// SPDX-License-Identifier: Apache-2.0
#include "smoj/losses.hpp"

#include <cmath>
#include <limits>

#include "smoj/error.hpp"

namespace smoj::loss {

void check_weights(const LossWeights& w) {
  if (!(w.lpips >= 0.0) || !(w.normal >= 0.0) || !(w.dist >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "loss weights must be nonnegative");
  }
  if (!(w.schedule_fraction >= 0.0 && w.schedule_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "schedule fraction must lie in [0,1]");
  }
}

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": shape mismatch (" + std::to_string(a) +
                                                 " vs " + std::to_string(b) + ")");
  }
}

double mean_squared(std::span<const double> x, std::span<const double> y, std::vector<double>& grad) {
  grad.assign(x.size(), 0.0);
  if (x.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
    grad[i] = 2.0 * d * inv;
  }
  return sum * inv;
}

}  // namespace

RenderLoss l_render(std::span<const double> pred_rgb, std::span<const double> pred_alpha,
                    std::span<const double> gt_rgb, std::span<const double> gt_mask) {
  require_same(pred_rgb.size(), gt_rgb.size(), "l_render rgb");
  require_same(pred_alpha.size(), gt_mask.size(), "l_render alpha");
  require_same(pred_rgb.size(), 3 * pred_alpha.size(), "l_render rgb/alpha");
  RenderLoss out;
  out.rgb = mean_squared(pred_rgb, gt_rgb, out.d_rgb);
  out.alpha = mean_squared(pred_alpha, gt_mask, out.d_alpha);
  out.value = out.rgb + out.alpha;
  return out;
}

NormalLoss l_normal(std::span<const double> n_pred, std::span<const double> n_surf,
                    std::span<const std::uint8_t> valid, bool normalize_pred) {
  require_same(n_pred.size(), n_surf.size(), "l_normal");
  require_same(n_pred.size(), 3 * valid.size(), "l_normal mask");
  NormalLoss out;
  out.d_pred.assign(n_pred.size(), 0.0);
  std::vector<std::size_t> pixels;
  for (std::size_t p = 0; p < valid.size(); ++p) {
    if (!valid[p]) continue;
    if (normalize_pred) {
      const double len2 = n_pred[3 * p] * n_pred[3 * p] + n_pred[3 * p + 1] * n_pred[3 * p + 1] +
                          n_pred[3 * p + 2] * n_pred[3 * p + 2];
      if (!(len2 > 0.0)) continue;
    }
    pixels.push_back(p);
  }
  out.valid = pixels.size();
  if (pixels.empty()) return out;
  const double inv = 1.0 / static_cast<double>(pixels.size());
  double sum = 0.0;
  for (std::size_t p : pixels) {
    const double* a = &n_pred[3 * p];
    const double* s = &n_surf[3 * p];
    double* g = &out.d_pred[3 * p];
    if (!normalize_pred) {
      sum += 1.0 - (a[0] * s[0] + a[1] * s[1] + a[2] * s[2]);
      for (int c = 0; c < 3; ++c) g[c] = -s[c] * inv;
      continue;
    }
    const double len = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double n[3] = {a[0] / len, a[1] / len, a[2] / len};
    const double dot = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
    sum += 1.0 - dot;
    // d(n.s)/da = (s - n (n.s)) / |a|
    for (int c = 0; c < 3; ++c) g[c] = -(s[c] - n[c] * dot) / len * inv;
  }
  out.value = sum * inv;
  return out;
}

DistLoss l_dist(const render::RayDistortionInput& rays) {
  DistLoss out;
  out.d_weight.resize(rays.rays.size());
  out.d_depth.resize(rays.rays.size());
  if (rays.rays.empty()) return out;
  const double inv = 1.0 / static_cast<double>(rays.rays.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < rays.rays.size(); ++r) {
    const auto& ray = rays.rays[r];
    auto& dw = out.d_weight[r];
    auto& dd = out.d_depth[r];
    dw.assign(ray.size(), 0.0);
    dd.assign(ray.size(), 0.0);
    double ray_sum = 0.0;
    for (std::size_t k = 0; k < ray.size(); ++k) {
      for (std::size_t j = 0; j < ray.size(); ++j) {
        const double diff = ray[k].depth - ray[j].depth;
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        ray_sum += ray[k].weight * ray[j].weight * std::abs(diff);
        dw[k] += 2.0 * ray[j].weight * std::abs(diff) * inv;
        dd[k] += 2.0 * ray[k].weight * ray[j].weight * sign * inv;
      }
    }
    sum += ray_sum;
  }
  out.value = sum * inv;
  return out;
}

std::string GdaLoss::report() const {
  return "mse: " + std::to_string(mse) +
         (perceptual_enabled ? ", perceptual: " + std::to_string(perceptual) : ", perceptual: disabled") +
         ", total: " + std::to_string(value);
}

GdaLoss l_gda(std::span<const double> pred, std::span<const double> target, int width, int height,
              const PerceptualFn& perceptual) {
  require_same(pred.size(), target.size(), "l_gda");
  GdaLoss out;
  std::vector<double> unused;
  out.mse = mean_squared(pred, target, unused);
  if (perceptual) {
    out.perceptual_enabled = true;
    out.perceptual = perceptual(pred, target, width, height);
  }
  out.value = out.mse + out.perceptual;
  return out;
}

Gen3DResult total_3dgen_loss(const render::PreciseOutput& pred, const render::RayDistortionInput& rays,
                             const Camera& cam, const Targets& targets, const LossWeights& weights, double progress,
                             const PerceptualFn& perceptual) {
  check_weights(weights);
  if (!(progress >= 0.0 && progress <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "progress must lie in [0,1]");
  const std::size_t n = pred.pixels();
  require_same(rays.rays.size(), n, "total_3dgen_loss rays");

  Gen3DResult res;
  Breakdown& b = res.breakdown;
  b.gate_open = progress >= weights.schedule_fraction;
  const double gate = b.gate_open ? 1.0 : 0.0;

  RenderLoss lr = l_render(pred.rgb, pred.alpha, targets.rgb, targets.mask);
  b.render = {lr.value, 1.0, lr.value};

  if (perceptual) {
    b.perceptual_enabled = true;
    const double v = perceptual(pred.rgb, targets.rgb, pred.width, pred.height);
    b.lpips = {v, weights.lpips, weights.lpips * v};
  } else {
    b.lpips = {0.0, weights.lpips, 0.0};
  }

  const std::vector<double> n_surf = render::normals_from_depth(pred.depth, pred.alpha, cam);
  std::vector<std::uint8_t> valid(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    const bool has_pred = pred.normal[3 * p] != 0.0 || pred.normal[3 * p + 1] != 0.0 || pred.normal[3 * p + 2] != 0.0;
    const bool has_surf = n_surf[3 * p] != 0.0 || n_surf[3 * p + 1] != 0.0 || n_surf[3 * p + 2] != 0.0;
    valid[p] = has_pred && has_surf;
  }
  NormalLoss ln = l_normal(pred.normal, n_surf, valid);
  b.normal_pixels = ln.valid;
  b.normal = {ln.value, weights.normal, gate * weights.normal * ln.value};

  DistLoss ld = l_dist(rays);
  b.dist = {ld.value, weights.dist, gate * weights.dist * ld.value};

  b.total = (b.render.weighted + b.lpips.weighted) + (b.normal.weighted + b.dist.weighted);

  auto& up = res.upstream;
  up.rgb = std::move(lr.d_rgb);
  up.alpha = std::move(lr.d_alpha);
  if (gate > 0.0 && weights.normal > 0.0 && ln.valid > 0) {
    up.normal = std::move(ln.d_pred);
    for (double& g : up.normal) g *= weights.normal;
  }
  if (gate > 0.0 && weights.dist > 0.0 && n > 0) up.distortion_weight = weights.dist / static_cast<double>(n);
  return res;
}

double psnr(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "psnr");
  if (a.empty()) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(std::span<const float> a, std::span<const float> b) {
  std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
  return psnr(da, db);
}

}  // namespace smoj::loss
