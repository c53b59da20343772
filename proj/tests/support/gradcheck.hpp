// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of the analytic gradients. The numeric
// side only evaluates forward values; derivatives come from differences.
#pragma once

#include <array>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "smoj/losses.hpp"
#include "smoj/render.hpp"

namespace gradcheck {

struct Outcome {
  double worst = 0.0;  // largest |a - n| / scale, compare against the tolerance
  std::size_t entries = 0;
  std::string where;

  void add(double analytic, double numeric, double group_max, const std::string& label) {
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-2 * group_max, 1e-12});
    const double r = std::abs(analytic - numeric) / scale;
    ++entries;
    if (r > worst) {
      worst = r;
      where = label + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
  }
};

// Checks a list of (analytic, numeric) pairs that share one scale group.
inline void add_group(Outcome& out, const std::vector<double>& analytic, const std::vector<double>& numeric,
                      const std::string& label) {
  double gmax = 0.0;
  for (double v : numeric) gmax = std::max(gmax, std::abs(v));
  for (std::size_t i = 0; i < analytic.size(); ++i)
    out.add(analytic[i], numeric[i], gmax, label + "[" + std::to_string(i) + "]");
}

inline double central(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Random upstream gradients for every rendered buffer plus the distortion
// term. Depth and normal upstreams are zeroed where alpha < 0.01: there the
// normalized outputs switch between 0 and sum/alpha, which a finite
// difference cannot see through.
inline smoj::render::UpstreamGradients random_upstream(const smoj::render::PreciseOutput& out, bool surfel,
                                                       std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  smoj::render::UpstreamGradients up;
  const std::size_t np = out.pixels();
  up.rgb.resize(3 * np);
  up.alpha.resize(np);
  up.depth.resize(np);
  for (auto& v : up.rgb) v = n(rng);
  for (auto& v : up.alpha) v = n(rng);
  for (std::size_t p = 0; p < np; ++p) up.depth[p] = out.alpha[p] < 0.01 ? 0.0 : 0.1 * n(rng);
  if (surfel) {
    up.normal.resize(3 * np);
    for (std::size_t p = 0; p < np; ++p)
      for (int c = 0; c < 3; ++c) up.normal[3 * p + c] = out.alpha[p] < 0.01 ? 0.0 : n(rng);
  }
  up.distortion_weight = 0.01;
  return up;
}

// The scalar whose gradient backprop_render computes for `up`.
inline double upstream_objective(const smoj::GaussianSet& set, const smoj::Camera& cam,
                                 const smoj::render::RenderConfig& cfg, const smoj::render::UpstreamGradients& up) {
  const auto o = smoj::render::render_precise(set, cam, cfg);
  double l = 0.0;
  for (std::size_t i = 0; i < up.rgb.size(); ++i) l += up.rgb[i] * o.rgb[i];
  for (std::size_t i = 0; i < up.alpha.size(); ++i) l += up.alpha[i] * o.alpha[i];
  for (std::size_t i = 0; i < up.depth.size(); ++i) l += up.depth[i] * o.depth[i];
  for (std::size_t i = 0; i < up.normal.size(); ++i) l += up.normal[i] * o.normal[i];
  if (up.distortion_weight != 0.0) {
    const auto rays = smoj::render::capture_rays(set, cam, cfg);
    double d = 0.0;
    for (const auto& r : rays.rays)
      for (const auto& a : r)
        for (const auto& b : r) d += a.weight * b.weight * std::abs(a.depth - b.depth);
    l += up.distortion_weight * d;
  }
  return l;
}

// Compares backprop_render against central differences over every field of
// every splat. Steps act on the stored f32 values; the true step is taken
// from the rounded perturbed values.
inline Outcome check_backprop(const smoj::GaussianSet& set, const smoj::Camera& cam,
                              const smoj::render::RenderConfig& cfg, const smoj::render::UpstreamGradients& up,
                              double h) {
  const auto res = smoj::render::backprop_render(set, cam, cfg, up);
  std::array<std::vector<double>, 5> an, nu;
  for (std::size_t j = 0; j < set.size(); ++j) {
    const auto& g = res.gradients[j];
    auto numeric = [&](const float* field) {
      smoj::GaussianSet a = set, b = set;
      const std::ptrdiff_t off =
          reinterpret_cast<const char*>(field) - reinterpret_cast<const char*>(&set.gaussians[j]);
      float* pa = reinterpret_cast<float*>(reinterpret_cast<char*>(&a.gaussians[j]) + off);
      float* pb = reinterpret_cast<float*>(reinterpret_cast<char*>(&b.gaussians[j]) + off);
      *pa = static_cast<float>(*pa + h);
      *pb = static_cast<float>(*pb - h);
      const double step = static_cast<double>(*pa) - static_cast<double>(*pb);
      return (upstream_objective(a, cam, cfg, up) - upstream_objective(b, cam, cfg, up)) / step;
    };
    const auto& s = set.gaussians[j];
    for (int c = 0; c < 3; ++c) {
      an[0].push_back(g.position[c]);
      nu[0].push_back(numeric(&s.position[c]));
      an[1].push_back(g.scale[c]);
      nu[1].push_back(numeric(&s.scale[c]));
      an[3].push_back(g.color[c]);
      nu[3].push_back(numeric(&s.color[c]));
    }
    for (int c = 0; c < 4; ++c) {
      an[2].push_back(g.orientation[c]);
      nu[2].push_back(numeric(&s.orientation[c]));
    }
    an[4].push_back(g.opacity);
    nu[4].push_back(numeric(&s.opacity));
  }
  Outcome out;
  const char* names[5] = {"position", "scale", "orientation", "color", "opacity"};
  for (int k = 0; k < 5; ++k) add_group(out, an[k], nu[k], names[k]);
  return out;
}

inline Outcome check_l_render(std::mt19937_64& rng, int w, int h, double step) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> rgb(3 * n), alpha(n), grgb(3 * n), mask(n);
  for (auto* v : {&rgb, &alpha, &grgb, &mask})
    for (auto& x : *v) x = u(rng);
  const auto res = smoj::loss::l_render(rgb, alpha, grgb, mask);
  std::vector<double> num_rgb(3 * n), num_alpha(n);
  for (std::size_t i = 0; i < 3 * n; ++i) {
    num_rgb[i] = gradcheck::central(
        [&](double x) {
          auto c = rgb;
          c[i] = x;
          return smoj::loss::l_render(c, alpha, grgb, mask).value;
        },
        rgb[i], step);
  }
  for (std::size_t i = 0; i < n; ++i) {
    num_alpha[i] = gradcheck::central(
        [&](double x) {
          auto c = alpha;
          c[i] = x;
          return smoj::loss::l_render(rgb, c, grgb, mask).value;
        },
        alpha[i], step);
  }
  Outcome out;
  add_group(out, res.d_rgb, num_rgb, "d_rgb");
  add_group(out, res.d_alpha, num_alpha, "d_alpha");
  return out;
}

inline Outcome check_l_normal(std::mt19937_64& rng, std::size_t pixels, bool normalize, double step) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution keep(0.8);
  std::vector<double> pred(3 * pixels), surf(3 * pixels);
  std::vector<std::uint8_t> valid(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    Eigen::Vector3d a(nd(rng), nd(rng), nd(rng)), s(nd(rng), nd(rng), nd(rng));
    s.normalize();
    if (!normalize) a.normalize();
    for (int c = 0; c < 3; ++c) {
      pred[3 * p + c] = a[c];
      surf[3 * p + c] = s[c];
    }
    valid[p] = keep(rng);
  }
  const auto res = smoj::loss::l_normal(pred, surf, valid, normalize);
  std::vector<double> num(3 * pixels);
  for (std::size_t i = 0; i < 3 * pixels; ++i) {
    num[i] = gradcheck::central(
        [&](double x) {
          auto c = pred;
          c[i] = x;
          return smoj::loss::l_normal(c, surf, valid, normalize).value;
        },
        pred[i], step);
  }
  Outcome out;
  add_group(out, res.d_pred, num, normalize ? "d_pred(normalized)" : "d_pred");
  return out;
}

inline Outcome check_l_dist(std::mt19937_64& rng, std::size_t rays, std::size_t max_samples, double step) {
  std::uniform_real_distribution<double> w(0.0, 1.0), d(0.5, 5.0);
  std::uniform_int_distribution<std::size_t> count(0, max_samples);
  smoj::render::RayDistortionInput in;
  in.rays.resize(rays);
  for (auto& r : in.rays) {
    const std::size_t k = count(rng);
    for (std::size_t i = 0; i < k; ++i) r.push_back({w(rng), d(rng)});
  }
  const auto res = smoj::loss::l_dist(in);
  std::vector<double> an_w, an_d, num_w, num_d;
  for (std::size_t r = 0; r < rays; ++r) {
    for (std::size_t i = 0; i < in.rays[r].size(); ++i) {
      an_w.push_back(res.d_weight[r][i]);
      an_d.push_back(res.d_depth[r][i]);
      num_w.push_back(gradcheck::central(
          [&](double x) {
            auto c = in;
            c.rays[r][i].weight = x;
            return smoj::loss::l_dist(c).value;
          },
          in.rays[r][i].weight, step));
      num_d.push_back(gradcheck::central(
          [&](double x) {
            auto c = in;
            c.rays[r][i].depth = x;
            return smoj::loss::l_dist(c).value;
          },
          in.rays[r][i].depth, step));
    }
  }
  Outcome out;
  add_group(out, an_w, num_w, "d_weight");
  add_group(out, an_d, num_d, "d_depth");
  return out;
}

}  // namespace gradcheck
