// SPDX-License-Identifier: Apache-2.0
//
// Image-space losses with analytic gradients. All image terms are
// mean-reduced (per buffer element), so weights are resolution independent.
//
//   L_render = mean (rgb - rgb_gt)^2 + mean (alpha - mask_gt)^2
//   L_normal = mean over valid pixels of 1 - n_pred . n_surf
//   L_dist   = mean over rays of sum_{k,j} w_k w_j |d_k - d_j|   (both orders)
//   L_3DGen  = L_render + l_lpips L_lpips + g (l_n L_normal + l_d L_dist)
//
// with g = 1 once progress >= schedule_fraction, else 0.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smoj/render.hpp"

namespace smoj::loss {

struct LossWeights {
  double lpips = 0.0;
  double normal = 0.05;
  double dist = 100.0;
  double schedule_fraction = 0.2;
};

// Throws Error(kInvalidArgument) for negative weights or a fraction outside [0,1].
void check_weights(const LossWeights& w);

// Optional perceptual term: value for a prediction/target pair of RGB images
// (H*W*3, row-major). Absent by default.
using PerceptualFn = std::function<double(std::span<const double> pred, std::span<const double> target, int width,
                                          int height)>;

struct RenderLoss {
  double value = 0.0;
  double rgb = 0.0;    // mean squared rgb error
  double alpha = 0.0;  // mean squared alpha error
  std::vector<double> d_rgb;
  std::vector<double> d_alpha;
};

RenderLoss l_render(std::span<const double> pred_rgb, std::span<const double> pred_alpha,
                    std::span<const double> gt_rgb, std::span<const double> gt_mask);

struct NormalLoss {
  double value = 0.0;
  std::size_t valid = 0;
  std::vector<double> d_pred;  // 3 per pixel
};

// `valid` holds one flag per pixel. With normalize_pred, the prediction is
// normalized inside the loss and the gradient is taken through the
// normalization (zero-length predictions count as invalid). An empty mask
// gives 0.
NormalLoss l_normal(std::span<const double> n_pred, std::span<const double> n_surf,
                    std::span<const std::uint8_t> valid, bool normalize_pred = false);

struct DistLoss {
  double value = 0.0;
  // Same shape as the input rays.
  std::vector<std::vector<double>> d_weight;
  std::vector<std::vector<double>> d_depth;
};

// The subgradient of |d_k - d_j| at a tie is 0.
DistLoss l_dist(const render::RayDistortionInput& rays);

struct GdaLoss {
  double mse = 0.0;
  double perceptual = 0.0;
  double value = 0.0;
  bool perceptual_enabled = false;
  std::string report() const;
};

GdaLoss l_gda(std::span<const double> pred, std::span<const double> target, int width, int height,
              const PerceptualFn& perceptual = {});

struct Targets {
  std::span<const double> rgb;   // H*W*3
  std::span<const double> mask;  // H*W
};

struct Term {
  double raw = 0.0;
  double weight = 0.0;
  double weighted = 0.0;
};

struct Breakdown {
  Term render;
  Term lpips;
  Term normal;
  Term dist;
  bool gate_open = false;
  bool perceptual_enabled = false;
  std::size_t normal_pixels = 0;
  double total = 0.0;
};

struct Gen3DResult {
  Breakdown breakdown;
  // Gradient of the total with respect to the rendered buffers, ready for
  // render::backprop_render. The normal-consistency target n_surf is treated
  // as a constant. The perceptual term contributes no gradient.
  render::UpstreamGradients upstream;
};

// `pred` must come from the same camera and set as `rays`. n_surf is derived
// from pred.depth with normals_from_depth; valid pixels have nonzero n_pred
// and n_surf.
Gen3DResult total_3dgen_loss(const render::PreciseOutput& pred, const render::RayDistortionInput& rays,
                             const Camera& cam, const Targets& targets, const LossWeights& weights, double progress,
                             const PerceptualFn& perceptual = {});

// 10 log10(1 / mse) over all entries; +inf for identical inputs.
double psnr(std::span<const double> a, std::span<const double> b);
double psnr(std::span<const float> a, std::span<const float> b);

}  // namespace smoj::loss
