// SPDX-License-Identifier: Apache-2.0
//
// Multi-view fitting of a Gaussian set to target renders with Adam.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "smoj/losses.hpp"
#include "smoj/render.hpp"

namespace smoj::fit {

struct TargetView {
  Camera camera;
  std::vector<double> rgb;    // H*W*3
  std::vector<double> alpha;  // H*W
};

// Turns renders into fitting targets (rgb and alpha become the ground truth).
std::vector<TargetView> targets_from_renders(const std::vector<Camera>& cameras,
                                             const std::vector<render::RenderOutput>& views);

struct LearningRates {
  double position = 1.6e-4;
  double scale = 5e-3;
  double rotation = 1e-3;
  double color = 2.5e-3;
  double opacity = 5e-2;
};

struct IterationReport {
  int iteration = 0;
  double total = 0.0;
  double render = 0.0;
  double normal = 0.0;
  double dist = 0.0;
};

struct FitConfig {
  int iterations = 1000;
  LearningRates lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  // Views per iteration; 0 or at least the view count uses every view.
  // Subsets are drawn from `seed`.
  int views_per_iteration = 0;
  std::uint64_t seed = 0;
  render::RenderConfig render;
  loss::PerceptualFn perceptual;
  // Projection bounds applied after every step.
  double min_opacity = 1e-4;
  double min_scale = 1e-6;
  std::function<void(const IterationReport&)> on_iteration;
};

void check_config(const FitConfig& cfg);

struct FitResult {
  GaussianSet set;
  // Mean total loss over the iteration's views, evaluated before the step.
  std::vector<IterationReport> history;
  bool diverged = false;
  int iterations_run = 0;
};

// Throws Error(kInvalidArgument) for bad config, no views, or an empty or
// invalid init.
// A non-finite loss stops the run with diverged = true and the set from the
// last finite iteration.
FitResult fit(const std::vector<TargetView>& targets, const GaussianSet& init, const FitConfig& cfg,
              const loss::LossWeights& weights = {});

// Mean loss terms of `set` against the targets at the given progress.
IterationReport evaluate(const std::vector<TargetView>& targets, const GaussianSet& set,
                         const render::RenderConfig& rcfg, const loss::LossWeights& weights, double progress);

// PSNR of each view's rgb.
std::vector<double> view_psnr(const std::vector<TargetView>& targets, const GaussianSet& set,
                              const render::RenderConfig& rcfg);

}  // namespace smoj::fit
