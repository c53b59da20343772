// SPDX-License-Identifier: Apache-2.0
#include "smoj/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "raster_internal.hpp"
#include "smoj/error.hpp"

namespace smoj::fit {

std::vector<TargetView> targets_from_renders(const std::vector<Camera>& cameras,
                                             const std::vector<render::RenderOutput>& views) {
  if (cameras.size() != views.size()) throw Error(ErrorCode::kInvalidArgument, "targets: camera/view count mismatch");
  std::vector<TargetView> out(cameras.size());
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& v = views[i];
    if (v.width != cameras[i].width || v.height != cameras[i].height || v.rgb.size() != 3 * v.pixels() ||
        v.alpha.size() != v.pixels()) {
      throw Error(ErrorCode::kInvalidArgument, "targets: view " + std::to_string(i) + " does not match its camera");
    }
    out[i].camera = cameras[i];
    out[i].rgb.assign(v.rgb.begin(), v.rgb.end());
    out[i].alpha.assign(v.alpha.begin(), v.alpha.end());
  }
  return out;
}

void check_config(const FitConfig& cfg) {
  if (cfg.iterations < 0) throw Error(ErrorCode::kInvalidArgument, "fit: iterations must be >= 0");
  const auto& lr = cfg.lr;
  for (double v : {lr.position, lr.scale, lr.rotation, lr.color, lr.opacity}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "fit: learning rates must be >= 0");
  }
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fit: moment coefficients must lie in [0,1)");
  }
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fit: epsilon must be > 0");
  if (cfg.views_per_iteration < 0) throw Error(ErrorCode::kInvalidArgument, "fit: views_per_iteration must be >= 0");
  if (!(cfg.min_opacity >= 0.0 && cfg.min_opacity <= 1.0) || !(cfg.min_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fit: invalid projection bounds");
  }
}

namespace {

void check_targets(const std::vector<TargetView>& targets) {
  if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "fit: need at least one target view");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    const std::size_t n = static_cast<std::size_t>(t.camera.width) * static_cast<std::size_t>(t.camera.height);
    if (n == 0 || t.rgb.size() != 3 * n || t.alpha.size() != n) {
      throw Error(ErrorCode::kInvalidArgument, "fit: target " + std::to_string(i) + " buffers do not match its camera");
    }
  }
}

struct ViewEval {
  loss::Breakdown breakdown;
  std::vector<render::SplatGradient> gradients;
};

ViewEval evaluate_view(const TargetView& t, const GaussianSet& set, const render::RenderConfig& rcfg,
                       const loss::LossWeights& weights, double progress, const loss::PerceptualFn& perceptual,
                       bool want_gradients) {
  const render::PreciseOutput out = render::render_precise(set, t.camera, rcfg);
  const bool gate = progress >= weights.schedule_fraction;
  render::RayDistortionInput rays;
  if (gate && weights.dist > 0.0) {
    rays = render::capture_rays(set, t.camera, rcfg);
  } else {
    rays.rays.resize(out.pixels());
  }
  const loss::Targets tg{t.rgb, t.alpha};
  loss::Gen3DResult res = loss::total_3dgen_loss(out, rays, t.camera, tg, weights, progress, perceptual);
  ViewEval ev;
  ev.breakdown = res.breakdown;
  if (want_gradients) ev.gradients = render::backprop_render(set, t.camera, rcfg, res.upstream).gradients;
  return ev;
}

struct Adam {
  std::vector<double> m, v;
  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

constexpr std::size_t kParams = 14;

void pack(const render::SplatGradient& g, double* dst) {
  for (int c = 0; c < 3; ++c) dst[c] = g.position[c];
  for (int c = 0; c < 3; ++c) dst[3 + c] = g.scale[c];
  for (int c = 0; c < 4; ++c) dst[6 + c] = g.orientation[c];
  for (int c = 0; c < 3; ++c) dst[10 + c] = g.color[c];
  dst[13] = g.opacity;
}

float* param(Gaussian& g, std::size_t k) {
  if (k < 3) return &g.position[k];
  if (k < 6) return &g.scale[k - 3];
  if (k < 10) return &g.orientation[k - 6];
  if (k < 13) return &g.color[k - 10];
  return &g.opacity;
}

double group_lr(const LearningRates& lr, std::size_t k) {
  if (k < 3) return lr.position;
  if (k < 6) return lr.scale;
  if (k < 10) return lr.rotation;
  if (k < 13) return lr.color;
  return lr.opacity;
}

void project(Gaussian& g, const FitConfig& cfg) {
  if (cfg.lr.scale > 0.0) {
    for (float& s : g.scale) s = std::max(s, static_cast<float>(cfg.min_scale));
  }
  if (cfg.lr.rotation > 0.0) {
    const double n = quat_norm(g.orientation);
    g.orientation = n > 0.0 ? normalize_quat(g.orientation) : Quatf{1.f, 0.f, 0.f, 0.f};
  }
  if (cfg.lr.color > 0.0) {
    for (float& c : g.color) c = std::clamp(c, 0.f, 1.f);
  }
  if (cfg.lr.opacity > 0.0) g.opacity = std::clamp(g.opacity, static_cast<float>(cfg.min_opacity), 1.f);
}

IterationReport mean_report(const std::vector<ViewEval>& evals, int iteration) {
  IterationReport r;
  r.iteration = iteration;
  for (const auto& e : evals) {
    r.total += e.breakdown.total;
    r.render += e.breakdown.render.weighted;
    r.normal += e.breakdown.normal.weighted;
    r.dist += e.breakdown.dist.weighted;
  }
  const double inv = 1.0 / static_cast<double>(evals.size());
  r.total *= inv;
  r.render *= inv;
  r.normal *= inv;
  r.dist *= inv;
  return r;
}

}  // namespace

FitResult fit(const std::vector<TargetView>& targets, const GaussianSet& init, const FitConfig& cfg,
              const loss::LossWeights& weights) {
  check_config(cfg);
  loss::check_weights(weights);
  check_targets(targets);
  if (init.empty()) throw Error(ErrorCode::kInvalidArgument, "fit: init set has no splats");
  const auto violations = validate_set(init);
  if (!violations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "fit: invalid init set: " + format_violation(violations.front()));
  }

  FitResult result;
  result.set = init;
  const std::size_t m = init.size();
  Adam adam;
  adam.resize(kParams * m);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const int n_threads = render::detail::resolve_threads(cfg.render.threads);
  std::vector<double> grad(kParams * m);
  GaussianSet previous;

  for (int it = 0; it < cfg.iterations; ++it) {
    const double progress = static_cast<double>(it) / static_cast<double>(cfg.iterations);
    std::size_t count = targets.size();
    if (cfg.views_per_iteration > 0 && static_cast<std::size_t>(cfg.views_per_iteration) < targets.size()) {
      count = static_cast<std::size_t>(cfg.views_per_iteration);
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
      }
    }

    std::vector<ViewEval> evals(count);
    render::RenderConfig inner = cfg.render;
    const bool across_views = n_threads > 1 && count > 1;
    if (across_views) inner.threads = 1;
    render::detail::parallel_for(static_cast<int>(count), across_views ? n_threads : 1, [&](int i) {
      evals[static_cast<std::size_t>(i)] = evaluate_view(targets[order[static_cast<std::size_t>(i)]], result.set,
                                                         inner, weights, progress, cfg.perceptual, true);
    });

    const IterationReport report = mean_report(evals, it);
    if (!std::isfinite(report.total)) {
      result.history.push_back(report);
      result.diverged = true;
      if (it > 0) result.set = previous;
      break;
    }
    result.history.push_back(report);
    if (cfg.on_iteration) cfg.on_iteration(report);

    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& e : evals) {
      double tmp[kParams];
      for (std::size_t j = 0; j < m; ++j) {
        pack(e.gradients[j], tmp);
        for (std::size_t k = 0; k < kParams; ++k) grad[kParams * j + k] += tmp[k];
      }
    }
    const double inv_views = 1.0 / static_cast<double>(count);
    const double t = static_cast<double>(it + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    previous = result.set;
    for (std::size_t j = 0; j < m; ++j) {
      Gaussian& g = result.set.gaussians[j];
      for (std::size_t k = 0; k < kParams; ++k) {
        const double lr = group_lr(cfg.lr, k);
        if (lr == 0.0) continue;
        const std::size_t idx = kParams * j + k;
        const double gk = grad[idx] * inv_views;
        adam.m[idx] = cfg.beta1 * adam.m[idx] + (1.0 - cfg.beta1) * gk;
        adam.v[idx] = cfg.beta2 * adam.v[idx] + (1.0 - cfg.beta2) * gk * gk;
        const double step = lr * (adam.m[idx] / bc1) / (std::sqrt(adam.v[idx] / bc2) + cfg.epsilon);
        float* p = param(g, k);
        *p = static_cast<float>(static_cast<double>(*p) - step);
      }
      project(g, cfg);
    }
    result.iterations_run = it + 1;
  }
  return result;
}

IterationReport evaluate(const std::vector<TargetView>& targets, const GaussianSet& set,
                         const render::RenderConfig& rcfg, const loss::LossWeights& weights, double progress) {
  check_targets(targets);
  std::vector<ViewEval> evals;
  for (const auto& t : targets) evals.push_back(evaluate_view(t, set, rcfg, weights, progress, {}, false));
  return mean_report(evals, 0);
}

std::vector<double> view_psnr(const std::vector<TargetView>& targets, const GaussianSet& set,
                              const render::RenderConfig& rcfg) {
  check_targets(targets);
  std::vector<double> out;
  for (const auto& t : targets) {
    const render::PreciseOutput o = render::render_precise(set, t.camera, rcfg);
    out.push_back(loss::psnr(o.rgb, t.rgb));
  }
  return out;
}

}  // namespace smoj::fit
