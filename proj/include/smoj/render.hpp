// SPDX-License-Identifier: Apache-2.0
//
// CPU tile rasterizer for Gaussian sets.
//
// Every splat has a screen-space falloff G(pixel) in [0,1]; per pixel,
// splats are composited front to back in order of camera-space center depth
// (ties broken by splat index):
//
//   w_k   = o_k G_k prod_{j<k} (1 - o_j G_j)
//   alpha = sum_k w_k
//   rgb   = sum_k w_k c_k + (1 - alpha) background
//   depth = sum_k w_k d_k / alpha         (0 where alpha < 1e-4)
//   normal= normalize(sum_k w_k n_k)      (2DGS only; 0 where alpha < 1e-4)
//
// Volumetric mode uses the EWA projection of the 3D covariance (dilated by
// 0.3 px^2); surfel mode intersects the pixel ray with the splat's disk
// spanned by its first two scaled axes. In both modes the falloff is the
// Gaussian exp(-q/2) in Mahalanobis distance q, shifted so that it reaches
// exactly 0 at q = 9 (three standard deviations) and is 0 beyond.
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "smoj/avatar.hpp"

namespace smoj::render {

enum class Mode {
  kVolumetric,  // 3DGS
  kSurfel,      // 2DGS oriented disks
};

struct RenderConfig {
  Mode mode = Mode::kVolumetric;
  int tile_size = 16;
  // Compositing of a pixel stops once accumulated alpha reaches this value.
  double saturation = 1.0 - 1e-6;
  bool early_termination = true;
  std::array<float, 3> background{0.f, 0.f, 0.f};
  // 0 selects std::thread::hardware_concurrency().
  int threads = 0;
  double near_plane = 0.01;
};

inline constexpr double kFalloffCutoff = 9.0;   // q at which G reaches 0
inline constexpr double kLowPassDilation = 0.3;  // px^2 added to the 2D covariance diagonal
inline constexpr double kMinAlphaForDepth = 1e-4;

// Row-major H x W (x C) buffers.
template <class T>
struct ImageBuffers {
  int width = 0;
  int height = 0;
  std::vector<T> rgb;     // H*W*3
  std::vector<T> alpha;   // H*W
  std::vector<T> depth;   // H*W
  std::vector<T> normal;  // H*W*3, camera space, facing the camera

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

using RenderOutput = ImageBuffers<float>;
using PreciseOutput = ImageBuffers<double>;

// Throws Error(kInvalidArgument) for a zero-sized image or invalid camera.
RenderOutput render(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg = {});
// Same computation, buffers kept in double precision (used for losses and
// gradient checks).
PreciseOutput render_precise(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg = {});

// Per-pixel evaluation over every splat in global depth order with no tiling,
// bounding boxes, or early termination. Throws if set.size() > max_splats.
RenderOutput render_reference(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg = {},
                              std::size_t max_splats = 64);

RenderOutput to_float(const PreciseOutput& out);

// Per-pixel compositing weights and depths, front to back, as used by the
// depth distortion loss. Index = y * width + x.
struct RayDistortionInput {
  struct Sample {
    double weight;
    double depth;
  };
  std::vector<std::vector<Sample>> rays;
};

RayDistortionInput capture_rays(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg = {});

// Surface normals from a depth map: back-project each pixel with its depth,
// take central differences in x and y, normal = normalize(dy x dx) oriented
// toward the camera. Pixels whose own alpha or any of their four neighbours'
// alpha is below `alpha_threshold` (or on the border) get a zero normal.
std::vector<double> normals_from_depth(const std::vector<double>& depth, const std::vector<double>& alpha,
                                       const Camera& cam, double alpha_threshold = kMinAlphaForDepth);

struct TurntableOptions {
  int width = 256;
  int height = 256;
  double fov_y = 0.8;  // radians
};

struct Turntable {
  std::vector<Camera> cameras;
  std::vector<RenderOutput> views;
};

// Cameras on a Fibonacci sphere of `radius` around the set centroid, world +y
// up; view 0 of a one-view layout sits on +z. Throws for an empty set.
std::vector<Camera> turntable_cameras(const GaussianSet& set, int n_views, double radius,
                                      const TurntableOptions& opts = {});
Turntable render_turntable(const GaussianSet& set, int n_views, double radius, const RenderConfig& cfg = {},
                           const TurntableOptions& opts = {});

struct SplatGradient {
  std::array<double, 3> position{};
  std::array<double, 3> scale{};
  std::array<double, 4> orientation{};
  std::array<double, 3> color{};
  double opacity = 0.0;
};

// Gradients of a scalar loss with respect to the rendered buffers. Empty
// vectors mean zero.
struct UpstreamGradients {
  std::vector<double> rgb;
  std::vector<double> alpha;
  std::vector<double> depth;
  std::vector<double> normal;
  // Adds distortion_weight * sum_pixels sum_{k,j} w_k w_j |d_k - d_j| to the
  // loss (pass lambda / pixel_count for the mean-reduced form).
  double distortion_weight = 0.0;
};

struct BackwardResult {
  std::vector<SplatGradient> gradients;  // one per input splat
  // Value of the distortion term added through UpstreamGradients.
  double distortion_loss = 0.0;
};

BackwardResult backprop_render(const GaussianSet& set, const Camera& cam, const RenderConfig& cfg,
                               const UpstreamGradients& upstream);

}  // namespace smoj::render
