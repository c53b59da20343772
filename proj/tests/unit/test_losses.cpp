// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "smoj/error.hpp"
#include "smoj/losses.hpp"
#include "smoj/synth.hpp"

using namespace smoj;
using namespace smoj::loss;

TEST(LRender, ZeroOnExactMatch) {
  const std::vector<double> rgb = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, alpha = {0.5, 1.0};
  const RenderLoss r = l_render(rgb, alpha, rgb, alpha);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.d_rgb) EXPECT_EQ(g, 0.0);
  for (double g : r.d_alpha) EXPECT_EQ(g, 0.0);
}

TEST(LRender, SingleChannelOffsetHandValue) {
  std::vector<double> gt(12, 0.5), pred(12, 0.5), mask(4, 1.0);
  pred[7] += 0.1;
  const RenderLoss r = l_render(pred, mask, gt, mask);
  const double d = pred[7] - gt[7];
  EXPECT_DOUBLE_EQ(r.value, d * d / 12.0);
  EXPECT_NEAR(r.value, 0.01 / 12.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.d_rgb[7], 2.0 * d / 12.0);
}

TEST(LRender, ShapeMismatch) {
  const std::vector<double> a(12), b(11), m(4);
  EXPECT_THROW(l_render(a, m, b, m), Error);
  EXPECT_THROW(l_render(a, std::vector<double>(3), a, std::vector<double>(3)), Error);
}

TEST(LRender, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto out = gradcheck::check_l_render(rng, 4, 4, 1e-4);
    EXPECT_LE(out.worst, 1e-5) << out.where;
  }
}

TEST(LNormal, Anchors) {
  const std::vector<double> surf = {0, 0, -1, 1, 0, 0};
  const std::vector<std::uint8_t> valid = {1, 1};
  EXPECT_NEAR(l_normal(surf, surf, valid).value, 0.0, 1e-12);
  const std::vector<double> ortho = {1, 0, 0, 0, 1, 0};
  EXPECT_NEAR(l_normal(ortho, surf, valid).value, 1.0, 1e-12);
  const std::vector<double> opposed = {0, 0, 1, -1, 0, 0};
  EXPECT_NEAR(l_normal(opposed, surf, valid).value, 2.0, 1e-12);
}

TEST(LNormal, MaskAndEmpty) {
  const std::vector<double> pred = {1, 0, 0, 0, 0, 1}, surf = {1, 0, 0, 0, 0, -1};
  const NormalLoss half = l_normal(pred, surf, std::vector<std::uint8_t>{1, 0});
  EXPECT_EQ(half.value, 0.0);
  EXPECT_EQ(half.valid, 1u);
  EXPECT_EQ(half.d_pred[5], 0.0);
  const NormalLoss none = l_normal(pred, surf, std::vector<std::uint8_t>{0, 0});
  EXPECT_EQ(none.value, 0.0);
  EXPECT_EQ(none.valid, 0u);
  const NormalLoss other = l_normal(pred, surf, std::vector<std::uint8_t>{0, 1});
  EXPECT_DOUBLE_EQ(other.value, 2.0);
  EXPECT_DOUBLE_EQ(other.d_pred[5], 1.0);
}

TEST(LNormal, RangeAndGradients) {
  std::mt19937_64 rng(2);
  for (bool normalize : {false, true}) {
    for (int i = 0; i < 10; ++i) {
      const auto out = gradcheck::check_l_normal(rng, 12, normalize, 1e-6);
      EXPECT_LE(out.worst, 1e-4) << out.where;
    }
  }
  std::normal_distribution<double> n(0, 1);
  std::vector<double> a(300), s(300);
  for (std::size_t p = 0; p < 100; ++p) {
    Eigen::Vector3d x(n(rng), n(rng), n(rng)), y(n(rng), n(rng), n(rng));
    x.normalize();
    y.normalize();
    for (int c = 0; c < 3; ++c) {
      a[3 * p + c] = x[c];
      s[3 * p + c] = y[c];
    }
  }
  const double v = l_normal(a, s, std::vector<std::uint8_t>(100, 1)).value;
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 2.0);
}

TEST(LDist, HandValues) {
  render::RayDistortionInput same;
  same.rays = {{{0.3, 2.0}, {0.5, 2.0}, {0.1, 2.0}}};
  const DistLoss tie = l_dist(same);
  EXPECT_EQ(tie.value, 0.0);
  for (double g : tie.d_depth[0]) EXPECT_EQ(g, 0.0);

  render::RayDistortionInput two;
  two.rays = {{{1.0, 1.0}, {1.0, 3.0}}};
  const DistLoss d = l_dist(two);
  EXPECT_DOUBLE_EQ(d.value, 4.0);
  EXPECT_DOUBLE_EQ(d.d_weight[0][0], 4.0);
  EXPECT_DOUBLE_EQ(d.d_depth[0][0], -2.0);
  EXPECT_DOUBLE_EQ(d.d_depth[0][1], 2.0);

  two.rays.push_back({});
  EXPECT_DOUBLE_EQ(l_dist(two).value, 2.0);
  EXPECT_EQ(l_dist(render::RayDistortionInput{}).value, 0.0);
}

TEST(LDist, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto out = gradcheck::check_l_dist(rng, 6, 6, 1e-6);
    EXPECT_LE(out.worst, 1e-4) << out.where;
  }
}

TEST(LGda, ContractWithAndWithoutPlugin) {
  const std::vector<double> a = {0.1, 0.2, 0.3, 0.4}, b = {0.1, 0.2, 0.3, 0.4};
  const GdaLoss same = l_gda(a, b, 2, 2);
  EXPECT_EQ(same.value, 0.0);
  EXPECT_FALSE(same.perceptual_enabled);
  EXPECT_NE(same.report().find("perceptual: disabled"), std::string::npos);
  const std::vector<double> c = {0.2, 0.2, 0.0, 0.4};
  const GdaLoss diff = l_gda(a, c, 2, 2);
  EXPECT_NEAR(diff.value, (0.01 + 0.09) / 4.0, 1e-15);
  const GdaLoss plug = l_gda(a, c, 2, 2, [](auto, auto, int, int) { return 0.5; });
  EXPECT_TRUE(plug.perceptual_enabled);
  EXPECT_DOUBLE_EQ(plug.value, diff.mse + 0.5);
  EXPECT_THROW(l_gda(a, std::vector<double>(3), 2, 2), Error);
}

namespace {

struct Scene {
  GaussianSet set;
  Camera cam;
  render::RenderConfig cfg;
  render::PreciseOutput pred;
  render::RayDistortionInput rays;
  std::vector<double> gt_rgb, gt_mask;
};

Scene surfel_scene(std::uint64_t seed) {
  Scene s;
  std::mt19937_64 rng(seed);
  s.set = oracle::random_set(rng, 10, 0.3);
  s.cam = Camera::look_at({0.2, 0.1, 2.5}, {0, 0, 0}, {0, 1, 0}, 32, 32, 0.8);
  s.cfg.mode = render::Mode::kSurfel;
  s.pred = render::render_precise(s.set, s.cam, s.cfg);
  s.rays = render::capture_rays(s.set, s.cam, s.cfg);
  std::uniform_real_distribution<double> u(0, 1);
  s.gt_rgb.resize(s.pred.rgb.size());
  s.gt_mask.resize(s.pred.alpha.size());
  for (auto& v : s.gt_rgb) v = u(rng);
  for (auto& v : s.gt_mask) v = u(rng) < 0.5 ? 0.0 : 1.0;
  return s;
}

}  // namespace

TEST(Total3DGen, GateIsHardAndInclusive) {
  const Scene s = surfel_scene(4);
  const Targets t{s.gt_rgb, s.gt_mask};
  const LossWeights w;
  const auto before = total_3dgen_loss(s.pred, s.rays, s.cam, t, w, 0.19);
  const auto at = total_3dgen_loss(s.pred, s.rays, s.cam, t, w, 0.2);
  const auto after = total_3dgen_loss(s.pred, s.rays, s.cam, t, w, 0.21);
  EXPECT_FALSE(before.breakdown.gate_open);
  EXPECT_TRUE(at.breakdown.gate_open);
  EXPECT_EQ(at.breakdown.total, after.breakdown.total);
  EXPECT_EQ(before.breakdown.total, before.breakdown.render.weighted);
  EXPECT_GT(after.breakdown.normal.raw, 0.0);
  EXPECT_GT(after.breakdown.dist.raw, 0.0);
  EXPECT_EQ(after.breakdown.total,
            before.breakdown.total + (after.breakdown.normal.weighted + after.breakdown.dist.weighted));
  EXPECT_TRUE(before.upstream.normal.empty());
  EXPECT_EQ(before.upstream.distortion_weight, 0.0);
  EXPECT_DOUBLE_EQ(after.upstream.distortion_weight, 100.0 / 1024.0);
}

TEST(Total3DGen, TermsMatchDirectEvaluation) {
  const Scene s = surfel_scene(5);
  const Targets t{s.gt_rgb, s.gt_mask};
  const auto r = total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{}, 0.5);
  EXPECT_EQ(r.breakdown.render.raw, l_render(s.pred.rgb, s.pred.alpha, s.gt_rgb, s.gt_mask).value);
  EXPECT_EQ(r.breakdown.dist.raw, l_dist(s.rays).value);
  EXPECT_EQ(r.breakdown.dist.weighted, 100.0 * l_dist(s.rays).value);
  const auto n_surf = render::normals_from_depth(s.pred.depth, s.pred.alpha, s.cam);
  std::vector<std::uint8_t> valid(s.pred.pixels());
  for (std::size_t p = 0; p < valid.size(); ++p) {
    const bool a = s.pred.normal[3 * p] != 0 || s.pred.normal[3 * p + 1] != 0 || s.pred.normal[3 * p + 2] != 0;
    const bool b = n_surf[3 * p] != 0 || n_surf[3 * p + 1] != 0 || n_surf[3 * p + 2] != 0;
    valid[p] = a && b;
  }
  EXPECT_EQ(r.breakdown.normal.raw, l_normal(s.pred.normal, n_surf, valid).value);
  EXPECT_EQ(r.breakdown.normal.weighted, 0.05 * r.breakdown.normal.raw);
}

TEST(Total3DGen, ZeroLambdasGiveRenderLossAndPluginAdds) {
  const Scene s = surfel_scene(6);
  const Targets t{s.gt_rgb, s.gt_mask};
  LossWeights w{0.0, 0.0, 0.0, 0.2};
  const auto r = total_3dgen_loss(s.pred, s.rays, s.cam, t, w, 0.9);
  EXPECT_EQ(r.breakdown.total, r.breakdown.render.raw);
  w.lpips = 2.0;
  const auto p = total_3dgen_loss(s.pred, s.rays, s.cam, t, w, 0.1, [](auto, auto, int, int) { return 0.25; });
  EXPECT_TRUE(p.breakdown.perceptual_enabled);
  EXPECT_DOUBLE_EQ(p.breakdown.total, r.breakdown.render.raw + 0.5);
}

TEST(Total3DGen, BelowGateIndependentOfGatedWeights) {
  const Scene s = surfel_scene(7);
  const Targets t{s.gt_rgb, s.gt_mask};
  const auto a = total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{0, 0.05, 100, 0.2}, 0.1);
  const auto b = total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{0, 7.0, 3.0, 0.2}, 0.1);
  EXPECT_EQ(a.breakdown.total, b.breakdown.total);
}

TEST(Total3DGen, RejectsBadWeightsAndProgress) {
  const Scene s = surfel_scene(8);
  const Targets t{s.gt_rgb, s.gt_mask};
  EXPECT_THROW(total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{0, -1, 0, 0.2}, 0.5), Error);
  EXPECT_THROW(total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{0, 0, 0, 1.5}, 0.5), Error);
  EXPECT_THROW(total_3dgen_loss(s.pred, s.rays, s.cam, t, LossWeights{}, 1.5), Error);
}

TEST(Psnr, KnownValues) {
  const std::vector<double> a = {0.0, 0.0, 0.0, 0.0}, b = {0.1, 0.1, 0.1, 0.1};
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
}
