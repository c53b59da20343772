// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "smoj/error.hpp"
#include "smoj/fit.hpp"
#include "smoj/synth.hpp"

using namespace smoj;

namespace {

struct Problem {
  GaussianSet gt;
  std::vector<fit::TargetView> targets;
  render::RenderConfig rcfg;
};

Problem make_problem(render::Mode mode, int views = 4, int size = 32) {
  Problem p;
  p.gt = make_random_set(8, 11, 0.5);
  p.rcfg.mode = mode;
  render::TurntableOptions to;
  to.width = size;
  to.height = size;
  const auto tt = render::render_turntable(p.gt, views, 3.0, p.rcfg, to);
  p.targets = fit::targets_from_renders(tt.cameras, tt.views);
  return p;
}

GaussianSet perturb(const GaussianSet& set, std::uint64_t seed) {
  GaussianSet out = set;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> np(0, 0.05), nc(0, 0.1);
  for (auto& g : out.gaussians) {
    for (auto& v : g.position) v = static_cast<float>(v + np(rng));
    for (auto& c : g.color) c = static_cast<float>(std::clamp(c + nc(rng), 0.0, 1.0));
  }
  return out;
}

}  // namespace

TEST(Fit, TargetsCopyRenders) {
  const Problem p = make_problem(render::Mode::kVolumetric, 3, 16);
  ASSERT_EQ(p.targets.size(), 3u);
  const auto cams = render::turntable_cameras(p.gt, 3, 3.0, render::TurntableOptions{16, 16, 0.8});
  for (std::size_t v = 0; v < 3; ++v) {
    const auto out = render::render(p.gt, cams[v], p.rcfg);
    ASSERT_EQ(p.targets[v].rgb.size(), out.rgb.size());
    for (std::size_t i = 0; i < out.rgb.size(); ++i) EXPECT_EQ(p.targets[v].rgb[i], out.rgb[i]);
    for (std::size_t i = 0; i < out.alpha.size(); ++i) EXPECT_EQ(p.targets[v].alpha[i], out.alpha[i]);
  }
  EXPECT_THROW(fit::targets_from_renders(cams, {}), Error);
}

TEST(Fit, ZeroLearningRateKeepsInit) {
  const Problem p = make_problem(render::Mode::kVolumetric);
  const GaussianSet init = perturb(p.gt, 3);
  fit::FitConfig cfg;
  cfg.iterations = 5;
  cfg.lr = {0, 0, 0, 0, 0};
  cfg.render = p.rcfg;
  const auto r = fit::fit(p.targets, init, cfg);
  EXPECT_EQ(r.set, init);
  ASSERT_EQ(r.history.size(), 5u);
  for (const auto& h : r.history) EXPECT_EQ(h.render, r.history.front().render);
}

TEST(Fit, GroundTruthHasZeroRenderLoss) {
  for (auto mode : {render::Mode::kVolumetric, render::Mode::kSurfel}) {
    const Problem p = make_problem(mode);
    const auto e = fit::evaluate(p.targets, p.gt, p.rcfg, loss::LossWeights{}, 0.0);
    // Targets are f32 renders; evaluation runs in double.
    EXPECT_LT(e.render, 1e-12);
    EXPECT_EQ(e.total, e.render);
    for (double v : fit::view_psnr(p.targets, p.gt, p.rcfg)) EXPECT_GT(v, 100.0);
  }
}

TEST(Fit, ReducesRenderLoss) {
  for (auto mode : {render::Mode::kVolumetric, render::Mode::kSurfel}) {
    const Problem p = make_problem(mode);
    const GaussianSet init = perturb(p.gt, 4);
    fit::FitConfig cfg;
    cfg.iterations = 150;
    cfg.render = p.rcfg;
    int seen = 0;
    cfg.on_iteration = [&](const fit::IterationReport& r) { EXPECT_EQ(r.iteration, seen++); };
    const loss::LossWeights w{0.0, 0.0, 0.0, 0.2};
    const auto r = fit::fit(p.targets, init, cfg, w);
    EXPECT_EQ(seen, 150);
    EXPECT_EQ(r.iterations_run, 150);
    EXPECT_FALSE(r.diverged);
    EXPECT_LT(r.history.back().total, 0.5 * r.history.front().total);
    EXPECT_TRUE(validate_set(r.set).empty());
    const auto before = fit::view_psnr(p.targets, init, p.rcfg);
    const auto after = fit::view_psnr(p.targets, r.set, p.rcfg);
    for (std::size_t v = 0; v < before.size(); ++v) EXPECT_GT(after[v], before[v]);
  }
}

TEST(Fit, DeterministicAcrossThreadCounts) {
  const Problem p = make_problem(render::Mode::kVolumetric);
  const GaussianSet init = perturb(p.gt, 5);
  fit::FitConfig cfg;
  cfg.iterations = 20;
  cfg.views_per_iteration = 2;
  cfg.seed = 9;
  cfg.render = p.rcfg;
  cfg.render.threads = 1;
  const auto a = fit::fit(p.targets, init, cfg);
  cfg.render.threads = 4;
  const auto b = fit::fit(p.targets, init, cfg);
  EXPECT_EQ(a.set, b.set);
  cfg.seed = 10;
  const auto c = fit::fit(p.targets, init, cfg);
  EXPECT_NE(a.set, c.set);
}

TEST(Fit, OversizedViewSubsetUsesEveryView) {
  const Problem p = make_problem(render::Mode::kVolumetric);
  fit::FitConfig cfg;
  cfg.iterations = 3;
  cfg.render = p.rcfg;
  const GaussianSet init = perturb(p.gt, 7);
  const auto all = fit::fit(p.targets, init, cfg);
  cfg.views_per_iteration = 99;
  EXPECT_EQ(fit::fit(p.targets, init, cfg).set, all.set);
}

TEST(Fit, ProjectionKeepsBounds) {
  const Problem p = make_problem(render::Mode::kVolumetric);
  fit::FitConfig cfg;
  cfg.iterations = 30;
  cfg.lr = {0.0, 2.0, 0.0, 0.0, 5.0};
  cfg.render = p.rcfg;
  const auto r = fit::fit(p.targets, perturb(p.gt, 6), cfg);
  for (const auto& g : r.set.gaussians) {
    EXPECT_GE(g.opacity, static_cast<float>(cfg.min_opacity));
    EXPECT_LE(g.opacity, 1.0f);
    for (float s : g.scale) EXPECT_GE(s, static_cast<float>(cfg.min_scale));
  }
}

TEST(Fit, RejectsBadInput) {
  const Problem p = make_problem(render::Mode::kVolumetric, 2, 16);
  fit::FitConfig cfg;
  EXPECT_THROW(fit::fit({}, p.gt, cfg), Error);
  EXPECT_THROW(fit::fit(p.targets, GaussianSet{}, cfg), Error);
  cfg.iterations = -1;
  EXPECT_THROW(fit::fit(p.targets, p.gt, cfg), Error);
  cfg.iterations = 1;
  cfg.lr.color = -1;
  EXPECT_THROW(fit::check_config(cfg), Error);
  cfg.lr.color = 1e-3;
  cfg.views_per_iteration = -1;
  EXPECT_THROW(fit::fit(p.targets, p.gt, cfg), Error);
  GaussianSet bad = p.gt;
  bad.gaussians[0].opacity = 2.0f;
  cfg.views_per_iteration = 0;
  EXPECT_THROW(fit::fit(p.targets, bad, cfg), Error);
}
