// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "serve.hpp"
#include "smoj/smoj.h"

extern char** environ;

namespace smoj::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  CliError(int code, const std::string& msg) : std::runtime_error(msg), exit_code(code) {}
  int exit_code;
};

int exit_for(smoj_status s) {
  switch (s) {
    case SMOJ_OK:
      return kExitOk;
    case SMOJ_ERR_INVALID_ARGUMENT:
      return kExitUsage;
    case SMOJ_ERR_PARSE:
      return kExitParse;
    case SMOJ_ERR_VALIDATION:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

void check(smoj_status s, const std::string& what) {
  if (s == SMOJ_OK) return;
  std::string msg = what + ": " + smoj_last_error();
  if (s == SMOJ_ERR_PARSE && smoj_last_error_offset() >= 0) {
    msg += " (offset " + std::to_string(smoj_last_error_offset()) + ")";
  }
  throw CliError(exit_for(s), msg);
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Asset = std::unique_ptr<smoj_asset, Deleter<smoj_asset, smoj_asset_free>>;
using Set = std::unique_ptr<smoj_set, Deleter<smoj_set, smoj_set_free>>;
using Image = std::unique_ptr<smoj_image, Deleter<smoj_image, smoj_image_free>>;
using Report = std::unique_ptr<smoj_report, Deleter<smoj_report, smoj_report_free>>;
using Timeline = std::unique_ptr<smoj_timeline, Deleter<smoj_timeline, smoj_timeline_free>>;
using Blob = std::unique_ptr<smoj_blob, Deleter<smoj_blob, smoj_blob_free>>;
using History = std::unique_ptr<smoj_fit_history, Deleter<smoj_fit_history, smoj_fit_history_free>>;
using MockServer = std::unique_ptr<smoj_mock_server, Deleter<smoj_mock_server, smoj_mock_server_free>>;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError(kExitRuntime, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw CliError(kExitRuntime, "cannot write '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kExitRuntime, "cannot create directory '" + dir.string() + "': " + ec.message());
}

Asset load_asset(const std::string& path, bool validate) {
  if (path.empty()) throw CliError(kExitUsage, "--asset is required");
  smoj_asset* a = nullptr;
  check(smoj_asset_load(path.c_str(), validate ? 1 : 0, &a), "loading '" + path + "'");
  return Asset(a);
}

Set rest_of(const smoj_asset* asset) {
  smoj_set* s = nullptr;
  check(smoj_asset_rest(asset, &s), "rest set");
  return Set(s);
}

Set empty_set(std::size_t n) {
  smoj_set* s = nullptr;
  check(smoj_set_create(n, &s), "allocating set");
  return Set(s);
}

std::array<double, 3> centroid(const smoj_set* set) {
  std::array<double, 3> c{0.0, 0.0, 0.0};
  const std::size_t n = smoj_set_size(set);
  const smoj_gaussian* g = smoj_set_data_const(set);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) c[k] += g[i].position[k];
  }
  if (n > 0) {
    for (auto& v : c) v /= static_cast<double>(n);
  }
  return c;
}

struct ViewFlags {
  std::string mode = "3dgs";
  int width = 512;
  int height = 512;
  double fov = 40.0;
  double distance = 3.5;
  int threads = 0;
};

void add_view_flags(CLI::App* sub, ViewFlags& v) {
  sub->add_option("--mode", v.mode, "Rasterization mode")->check(CLI::IsMember({"3dgs", "2dgs"}));
  sub->add_option("--width", v.width, "Image width")->check(CLI::PositiveNumber);
  sub->add_option("--height", v.height, "Image height")->check(CLI::PositiveNumber);
  sub->add_option("--fov", v.fov, "Vertical field of view in degrees")->check(CLI::Range(1.0, 179.0));
  sub->add_option("--distance", v.distance, "Camera distance from the set centroid")->check(CLI::PositiveNumber);
  sub->add_option("--threads", v.threads, "Render threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

smoj_render_config render_config(const ViewFlags& v) {
  smoj_render_config cfg;
  smoj_render_config_default(&cfg);
  cfg.mode = v.mode == "2dgs" ? SMOJ_MODE_2DGS : SMOJ_MODE_3DGS;
  cfg.threads = v.threads;
  return cfg;
}

smoj_camera frontal_camera(const smoj_set* set, const ViewFlags& v) {
  const auto c = centroid(set);
  const double eye[3] = {c[0], c[1], c[2] + v.distance};
  const double up[3] = {0.0, 1.0, 0.0};
  smoj_camera cam;
  check(smoj_camera_look_at(eye, c.data(), up, v.width, v.height, v.fov * std::numbers::pi / 180.0, &cam),
        "frontal camera");
  return cam;
}

std::vector<float> parse_float_list(const std::string& text, const std::string& what) {
  std::vector<float> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stof(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw CliError(kExitUsage, what + ": bad number '" + token + "'");
    }
  }
  return out;
}

std::vector<long> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<long> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stol(token, &used));
      if (used != token.size() || out.back() < 0) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw CliError(kExitUsage, what + ": bad non-negative integer '" + token + "'");
    }
  }
  if (out.empty()) throw CliError(kExitUsage, what + ": empty list");
  return out;
}

std::vector<float> resolve_weights(const smoj_asset* asset, const std::string& preset, const std::string& weights) {
  const std::size_t k = smoj_asset_channel_count(asset);
  std::vector<float> w(k, 0.0f);
  if (!preset.empty() && !weights.empty()) throw CliError(kExitUsage, "--preset and --weights are exclusive");
  if (!preset.empty()) check(smoj_emotion_preset(preset.c_str(), w.data(), w.size()), "preset");
  if (!weights.empty()) {
    w = parse_float_list(weights, "--weights");
    if (w.size() != k) {
      throw CliError(kExitUsage, "--weights: expected " + std::to_string(k) + " values, got " +
                                     std::to_string(w.size()));
    }
  }
  return w;
}

std::string view_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu", i);
  return buf;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

json summary(const std::vector<double>& v) {
  return {{"p50", percentile(v, 50)}, {"p90", percentile(v, 90)}, {"p99", percentile(v, 99)},
          {"max", v.empty() ? 0.0 : *std::max_element(v.begin(), v.end())}};
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

// ---------------------------------------------------------------- inspect

struct InspectFlags {
  std::string asset;
};

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
  if (f.asset.empty()) throw CliError(kExitUsage, "--asset is required");
  const std::uintmax_t size = fs::exists(f.asset) ? fs::file_size(f.asset) : 0;
  const Asset asset = load_asset(f.asset, false);
  const std::size_t k = smoj_asset_channel_count(asset.get());
  out << "file: " << f.asset << "\n";
  out << "file_size: " << size << "\n";
  out << "splats: " << smoj_asset_splat_count(asset.get()) << "\n";
  out << "channels: " << k << "\n";

  std::vector<smoj_component_delta> deltas(k);
  std::size_t n = 0;
  check(smoj_asset_component_deltas(asset.get(), deltas.data(), deltas.size(), &n), "component deltas");
  out << "channel,name,pos_max,pos_mean,scale_max,rot_max,color_max,opacity_max,changed_splats\n";
  out << std::setprecision(6);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& d = deltas[i];
    out << i << "," << smoj_asset_channel_name(asset.get(), i) << "," << d.position.max_abs << ","
        << d.position.mean_abs << "," << d.scale.max_abs << "," << d.orientation.max_abs << "," << d.color.max_abs
        << "," << d.opacity.max_abs << "," << d.changed_splats << "\n";
  }

  smoj_report* r = nullptr;
  check(smoj_asset_validate(asset.get(), &r), "validation");
  const Report report(r);
  const std::size_t issues = smoj_report_count(report.get());
  if (issues == 0) {
    out << "validation: ok\n";
    return kExitOk;
  }
  out << "validation: " << issues << " violation(s)\n";
  for (std::size_t i = 0; i < issues; ++i) out << "  " << smoj_report_line(report.get(), i) << "\n";
  return kExitValidation;
}

// ---------------------------------------------------------------- render

struct RenderFlags {
  std::string asset;
  std::string out = "render_out";
  int turntable = 0;
  std::string preset;
  std::string weights;
  ViewFlags view;
};

void write_view(const smoj_image* img, const fs::path& dir, const std::string& name, bool normals) {
  check(smoj_image_write_png(img, (dir / (name + ".png")).c_str()), "writing png");
  const char* buffers[] = {"rgb", "alpha", "depth", "normal"};
  for (const char* b : buffers) {
    if (std::string(b) == "normal" && !normals) continue;
    check(smoj_image_write_raw(img, b, (dir / (name + "." + b + ".smim")).c_str()), "writing raw buffer");
  }
}

int cmd_render(const RenderFlags& f, std::ostream& out) {
  const Asset asset = load_asset(f.asset, true);
  const auto w = resolve_weights(asset.get(), f.preset, f.weights);
  const Set set = empty_set(0);
  check(smoj_blend(asset.get(), w.data(), w.size(), set.get()), "blend");
  const Set rest = rest_of(asset.get());
  const smoj_render_config cfg = render_config(f.view);
  const bool normals = f.view.mode == "2dgs";

  std::vector<smoj_camera> cams;
  if (f.turntable > 0) {
    cams.resize(static_cast<std::size_t>(f.turntable));
    check(smoj_turntable_cameras(rest.get(), cams.size(), f.view.distance, f.view.width, f.view.height,
                                 f.view.fov * std::numbers::pi / 180.0, cams.data()),
          "turntable cameras");
  } else {
    cams.push_back(frontal_camera(rest.get(), f.view));
  }

  const fs::path dir = f.out;
  ensure_dir(dir);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    smoj_image* img = nullptr;
    check(smoj_render(set.get(), &cams[i], &cfg, &img), "render");
    const Image image(img);
    write_view(image.get(), dir, view_name(i), normals);
    out << "wrote " << (dir / (view_name(i) + ".png")).string() << "\n";
  }
  check(smoj_cameras_write((dir / "cameras.txt").c_str(), cams.data(), cams.size()), "writing cameras");
  out << "wrote " << (dir / "cameras.txt").string() << " (" << cams.size() << " camera(s))\n";
  return kExitOk;
}

// ---------------------------------------------------------------- animate

struct AnimateFlags {
  std::string asset;
  std::string timeline;
  std::string out = "animate_out";
  double fps = 30.0;
  ViewFlags view;
};

int cmd_animate(const AnimateFlags& f, std::ostream& out) {
  const Asset asset = load_asset(f.asset, true);
  if (f.timeline.empty()) throw CliError(kExitUsage, "--timeline is required");
  smoj_timeline* t = nullptr;
  check(smoj_timeline_load(f.timeline.c_str(), &t), "loading timeline");
  const Timeline timeline(t);
  check(smoj_timeline_check(timeline.get(), asset.get()), "timeline/asset channels");

  std::size_t frames = 0;
  const smoj_status s = smoj_timeline_sample_times(timeline.get(), f.fps, nullptr, 0, &frames);
  if (s != SMOJ_OK && s != SMOJ_ERR_BUFFER_TOO_SMALL) check(s, "sampling timeline");
  std::vector<double> times(frames);
  check(smoj_timeline_sample_times(timeline.get(), f.fps, times.data(), times.size(), &frames), "sampling timeline");

  const Set rest = rest_of(asset.get());
  const smoj_camera cam = frontal_camera(rest.get(), f.view);
  const smoj_render_config cfg = render_config(f.view);
  const fs::path dir = f.out;
  ensure_dir(dir);

  const Set set = empty_set(0);
  std::vector<float> w(smoj_asset_channel_count(asset.get()));
  std::vector<double> blend_ms, render_ms;
  for (std::size_t i = 0; i < times.size(); ++i) {
    check(smoj_timeline_weights_at(timeline.get(), times[i], w.data(), w.size()), "timeline weights");
    auto t0 = std::chrono::steady_clock::now();
    check(smoj_blend(asset.get(), w.data(), w.size(), set.get()), "blend");
    blend_ms.push_back(ms_since(t0));
    t0 = std::chrono::steady_clock::now();
    smoj_image* img = nullptr;
    check(smoj_render(set.get(), &cam, &cfg, &img), "render");
    const Image image(img);
    render_ms.push_back(ms_since(t0));
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.png", i);
    check(smoj_image_write_png(image.get(), (dir / name).c_str()), "writing frame");
  }

  const json report = {{"frames", times.size()},
                       {"fps", f.fps},
                       {"blend_ms", summary(blend_ms)},
                       {"render_ms", summary(render_ms)},
                       {"per_frame", {{"blend_ms", blend_ms}, {"render_ms", render_ms}}}};
  write_text(dir / "timing.json", report.dump(2) + "\n");
  out << "frames: " << times.size() << "\n" << std::fixed << std::setprecision(3);
  for (const char* key : {"blend_ms", "render_ms"}) {
    const auto& s2 = report[key];
    out << key << ": p50 " << s2["p50"].get<double>() << " p90 " << s2["p90"].get<double>() << " p99 "
        << s2["p99"].get<double>() << " max " << s2["max"].get<double>() << "\n";
  }
  out << "wrote " << (dir / "timing.json").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitFlags {
  std::string targets;
  std::string init;
  std::string out;
  int iterations = 1000;
  std::uint64_t seed = 0;
  double perturb_position = 0.0;
  double perturb_color = 0.0;
  int views_per_iteration = 0;
  double lambda_normal = 0.05;
  double lambda_dist = 100.0;
  double schedule_fraction = 0.2;
  int log_every = 100;
  ViewFlags view;
};

struct TargetData {
  std::vector<smoj_camera> cameras;
  std::vector<std::vector<float>> rgb, alpha;
};

std::vector<float> read_raw(const fs::path& path, int width, int height, int channels) {
  std::size_t n = 0;
  int32_t h = 0, w = 0, c = 0;
  const smoj_status s = smoj_raw_read(path.c_str(), &h, &w, &c, nullptr, 0, &n);
  if (s != SMOJ_OK && s != SMOJ_ERR_BUFFER_TOO_SMALL) check(s, "reading '" + path.string() + "'");
  if (h != height || w != width || c != channels) {
    throw CliError(kExitValidation, "'" + path.string() + "' has shape " + std::to_string(h) + "x" +
                                        std::to_string(w) + "x" + std::to_string(c) + ", camera expects " +
                                        std::to_string(height) + "x" + std::to_string(width) + "x" +
                                        std::to_string(channels));
  }
  std::vector<float> data(n);
  check(smoj_raw_read(path.c_str(), &h, &w, &c, data.data(), data.size(), &n), "reading '" + path.string() + "'");
  return data;
}

TargetData load_targets(const fs::path& dir) {
  TargetData t;
  const std::string cams = (dir / "cameras.txt").string();
  std::size_t n = 0;
  const smoj_status s = smoj_cameras_read(cams.c_str(), nullptr, 0, &n);
  if (s != SMOJ_OK && s != SMOJ_ERR_BUFFER_TOO_SMALL) check(s, "reading cameras");
  t.cameras.resize(n);
  check(smoj_cameras_read(cams.c_str(), t.cameras.data(), n, &n), "reading cameras");
  if (n == 0) throw CliError(kExitValidation, "'" + cams + "' lists no cameras");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = t.cameras[i];
    t.rgb.push_back(read_raw(dir / (view_name(i) + ".rgb.smim"), c.width, c.height, 3));
    t.alpha.push_back(read_raw(dir / (view_name(i) + ".alpha.smim"), c.width, c.height, 1));
  }
  return t;
}

void perturb(smoj_set* set, double sigma_pos, double sigma_color, std::uint64_t seed) {
  if (sigma_pos <= 0.0 && sigma_color <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  smoj_gaussian* g = smoj_set_data(set);
  for (std::size_t i = 0; i < smoj_set_size(set); ++i) {
    for (auto& p : g[i].position) p = static_cast<float>(p + sigma_pos * unit(rng));
    for (auto& c : g[i].color) c = static_cast<float>(std::clamp(c + sigma_color * unit(rng), 0.0, 1.0));
  }
}

// Carries the fitted rest change into every component so channel deltas survive.
Asset rebuild_asset(const smoj_asset* init, const smoj_set* init_rest, const smoj_set* fitted) {
  const std::size_t k = smoj_asset_channel_count(init);
  const std::size_t m = smoj_set_size(fitted);
  const smoj_gaussian* a = smoj_set_data_const(init_rest);
  const smoj_gaussian* b = smoj_set_data_const(fitted);
  std::vector<Set> comps;
  std::vector<const smoj_set*> comp_ptrs;
  std::vector<const char*> names;
  for (std::size_t c = 0; c < k; ++c) {
    smoj_set* s = nullptr;
    check(smoj_asset_component(init, c, &s), "component");
    comps.emplace_back(s);
    smoj_gaussian* g = smoj_set_data(s);
    for (std::size_t i = 0; i < m; ++i) {
      const float* fa = &a[i].position[0];
      const float* fb = &b[i].position[0];
      float* fg = &g[i].position[0];
      for (int j = 0; j < 14; ++j) fg[j] = fg[j] + (fb[j] - fa[j]);
      double n2 = 0.0;
      for (float q : g[i].orientation) n2 += static_cast<double>(q) * q;
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-6 && n2 > 0.0) {
        for (auto& q : g[i].orientation) q = static_cast<float>(q / std::sqrt(n2));
      }
      for (auto& s2 : g[i].scale) s2 = std::max(s2, 1e-6f);
      for (auto& col : g[i].color) col = std::clamp(col, 0.0f, 1.0f);
      g[i].opacity = std::clamp(g[i].opacity, 0.0f, 1.0f);
    }
    comp_ptrs.push_back(s);
    names.push_back(smoj_asset_channel_name(init, c));
  }
  smoj_asset* out = nullptr;
  check(smoj_asset_create(fitted, comp_ptrs.data(), k, names.data(), &out), "building asset");
  return Asset(out);
}

void history_cb(const smoj_fit_iteration* it, void* user) {
  auto* ctx = static_cast<std::pair<std::ostream*, int>*>(user);
  if (ctx->second > 0 && it->iteration % ctx->second == 0) {
    *ctx->first << it->iteration << "," << it->total << "," << it->render << "," << it->normal << "," << it->dist
                << "\n";
  }
}

int cmd_fit(const FitFlags& f, std::ostream& out) {
  if (f.targets.empty()) throw CliError(kExitUsage, "--targets is required");
  if (f.out.empty()) throw CliError(kExitUsage, "--out is required");
  const TargetData targets = load_targets(f.targets);
  const Asset init = load_asset(f.init, true);
  const Set init_rest = rest_of(init.get());
  perturb(init_rest.get(), f.perturb_position, f.perturb_color, f.seed);

  smoj_fit_config cfg;
  smoj_fit_config_default(&cfg);
  cfg.iterations = f.iterations;
  cfg.seed = f.seed;
  cfg.views_per_iteration = f.views_per_iteration;
  cfg.lambda_normal = f.lambda_normal;
  cfg.lambda_dist = f.lambda_dist;
  cfg.schedule_fraction = f.schedule_fraction;
  cfg.render = render_config(f.view);

  std::vector<const float*> rgb, alpha;
  for (std::size_t i = 0; i < targets.cameras.size(); ++i) {
    rgb.push_back(targets.rgb[i].data());
    alpha.push_back(targets.alpha[i].data());
  }
  out << "iter,total,render,normal,dist\n" << std::setprecision(9);
  std::pair<std::ostream*, int> ctx{&out, f.log_every};
  smoj_set* fitted_raw = nullptr;
  smoj_fit_history* hist_raw = nullptr;
  check(smoj_fit(init_rest.get(), targets.cameras.data(), rgb.data(), alpha.data(), targets.cameras.size(), &cfg,
                 history_cb, &ctx, &fitted_raw, &hist_raw),
        "fit");
  const Set fitted(fitted_raw);
  const History history(hist_raw);

  std::ostringstream log;
  log << "iter,total,render,normal,dist\n" << std::setprecision(9);
  for (std::size_t i = 0; i < smoj_fit_history_size(history.get()); ++i) {
    smoj_fit_iteration it;
    check(smoj_fit_history_get(history.get(), i, &it), "history");
    log << it.iteration << "," << it.total << "," << it.render << "," << it.normal << "," << it.dist << "\n";
  }
  const fs::path out_path = f.out;
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  write_text(out_path.string() + ".loss.csv", log.str());

  const Asset result = rebuild_asset(init.get(), init_rest.get(), fitted.get());
  check(smoj_asset_save(result.get(), out_path.c_str(), nullptr), "saving asset");

  std::vector<double> psnr(targets.cameras.size());
  check(smoj_view_psnr(fitted.get(), targets.cameras.data(), rgb.data(), rgb.size(), &cfg.render, psnr.data()),
        "psnr");
  out << std::fixed << std::setprecision(3);
  double min_psnr = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < psnr.size(); ++i) {
    out << "psnr " << view_name(i) << " " << psnr[i] << "\n";
    min_psnr = std::min(min_psnr, psnr[i]);
  }
  out << "psnr_min " << min_psnr << "\n";
  const std::size_t hn = smoj_fit_history_size(history.get());
  if (hn > 0) {
    smoj_fit_iteration first, last;
    check(smoj_fit_history_get(history.get(), 0, &first), "history");
    check(smoj_fit_history_get(history.get(), hn - 1, &last), "history");
    out << std::scientific << "loss_initial " << first.total << "\nloss_final " << last.total << "\n";
  }
  out << "wrote " << out_path.string() << " and " << out_path.string() << ".loss.csv\n";
  if (smoj_fit_history_diverged(history.get())) {
    throw CliError(kExitRuntime, "fit diverged (non-finite loss); last finite set written");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchFlags {
  std::string asset;
  std::string resolutions = "256,512";
  std::string counts = "0,10000,50000";
  int frames = 30;
  int warmup = 3;
  std::uint64_t seed = 1;
  std::string format = "tsv";
  ViewFlags view;
};

struct BenchCell {
  int size = 0;
  std::size_t splats = 0;
  std::string source;
  double blend_ms = 0.0;
  double render_ms = 0.0;
  double frame_ms = 0.0;
  double fps = 0.0;
  bool monotonic = true;
};

BenchCell bench_cell(const smoj_asset* asset, const std::string& source, int size, const BenchFlags& f) {
  ViewFlags v = f.view;
  v.width = size;
  v.height = size;
  const Set rest = rest_of(asset);
  const smoj_camera cam = frontal_camera(rest.get(), v);
  const smoj_render_config cfg = render_config(v);
  const std::size_t k = smoj_asset_channel_count(asset);
  std::vector<std::vector<float>> weights;
  for (std::size_t p = 0; p < smoj_emotion_preset_count(); ++p) {
    std::vector<float> w(k, 0.0f);
    if (smoj_emotion_preset(smoj_emotion_preset_name(p), w.data(), w.size()) == SMOJ_OK) weights.push_back(w);
  }
  if (weights.empty()) weights.emplace_back(k, 0.0f);

  const Set set = empty_set(0);
  double blend = 0.0, render = 0.0;
  for (int i = -f.warmup; i < f.frames; ++i) {
    const auto& w = weights[static_cast<std::size_t>(i + f.warmup) % weights.size()];
    auto t0 = std::chrono::steady_clock::now();
    check(smoj_blend(asset, w.data(), w.size(), set.get()), "blend");
    const double b = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    smoj_image* img = nullptr;
    check(smoj_render(set.get(), &cam, &cfg, &img), "render");
    smoj_image_free(img);
    const double r = ms_since(t0);
    if (i >= 0) {
      blend += b;
      render += r;
    }
  }
  BenchCell c;
  c.size = size;
  c.splats = smoj_asset_splat_count(asset);
  c.source = source;
  c.blend_ms = blend / f.frames;
  c.render_ms = render / f.frames;
  c.frame_ms = c.blend_ms + c.render_ms;
  c.fps = c.frame_ms > 0.0 ? 1000.0 / c.frame_ms : std::numeric_limits<double>::infinity();
  return c;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  if (f.frames < 1) throw CliError(kExitUsage, "--frames must be >= 1");
  if (f.format != "tsv" && f.format != "json") throw CliError(kExitUsage, "--format must be tsv or json");
  const auto sizes = parse_int_list(f.resolutions, "--resolutions");
  std::vector<std::pair<Asset, std::string>> assets;
  if (!f.asset.empty()) {
    assets.emplace_back(load_asset(f.asset, true), "file");
  } else {
    for (long m : parse_int_list(f.counts, "--counts")) {
      smoj_asset* a = nullptr;
      check(smoj_asset_synthetic(static_cast<std::size_t>(m), f.seed, &a), "synthetic asset");
      assets.emplace_back(Asset(a), "synthetic");
    }
  }
  std::vector<BenchCell> cells;
  for (const auto& [asset, source] : assets) {
    for (long s : sizes) {
      if (s < 1) throw CliError(kExitUsage, "--resolutions: sizes must be positive");
      cells.push_back(bench_cell(asset.get(), source, static_cast<int>(s), f));
    }
  }
  // Per splat count, frame time must not drop as resolution grows.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[i].splats == cells[j].splats && cells[j].size > cells[i].size &&
          cells[j].frame_ms < cells[i].frame_ms) {
        cells[j].monotonic = false;
      }
    }
  }
  if (f.format == "json") {
    json rows = json::array();
    for (const auto& c : cells) {
      rows.push_back({{"width", c.size}, {"height", c.size}, {"splats", c.splats}, {"source", c.source},
                      {"frames", f.frames}, {"blend_ms", c.blend_ms}, {"render_ms", c.render_ms},
                      {"frame_ms", c.frame_ms}, {"fps", c.fps}, {"monotonic", c.monotonic}});
    }
    out << json{{"mode", f.view.mode}, {"threads", f.view.threads}, {"cells", rows}}.dump(2) << "\n";
    return kExitOk;
  }
  out << "width\theight\tsplats\tsource\tframes\tblend_ms\trender_ms\tframe_ms\tfps\tmonotonic\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& c : cells) {
    out << c.size << "\t" << c.size << "\t" << c.splats << "\t" << c.source << "\t" << f.frames << "\t"
        << c.blend_ms << "\t" << c.render_ms << "\t" << c.frame_ms << "\t" << c.fps << "\t"
        << (c.monotonic ? "ok" : "VIOLATION") << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- stylize

struct StylizeFlags {
  std::string input;
  std::string out;
  std::string endpoint = "http://127.0.0.1:8090";
  std::string prompt;
  double strength = 0.5;
  double edge = 0.5;
  double identity = 0.5;
  double timeout = 30.0;
};

int cmd_stylize(const StylizeFlags& f, std::ostream& out) {
  if (f.input.empty() || f.out.empty()) throw CliError(kExitUsage, "--input and --out are required");
  const auto png = read_bytes(f.input);
  const smoj_stylize_params params{f.prompt.c_str(), f.strength, f.edge, f.identity, f.timeout};
  smoj_blob* b = nullptr;
  smoj_stylize_info info{};
  check(smoj_stylize(f.endpoint.c_str(), png.data(), png.size(), &params, &b, &info), "stylize");
  const Blob blob(b);
  std::ofstream o(f.out, std::ios::binary);
  o.write(reinterpret_cast<const char*>(smoj_blob_data(blob.get())),
          static_cast<std::streamsize>(smoj_blob_size(blob.get())));
  if (!o) throw CliError(kExitRuntime, "cannot write '" + f.out + "'");
  out << std::fixed << std::setprecision(3) << "service_mode " << info.service_mode << "\nservice_latency_s "
      << info.service_latency << "\nelapsed_s " << info.elapsed << "\nwrote " << f.out << "\n";
  return kExitOk;
}

struct MockFlags {
  int port = 8090;
  std::string mode = "echo";
  double slow_seconds = 2.0;
};

int cmd_mock(const MockFlags& f, std::ostream& out) {
  smoj_mock_server* s = nullptr;
  check(smoj_mock_server_start(f.port, f.mode.c_str(), f.slow_seconds, &s), "mock stylizer");
  const MockServer server(s);
  out << "mock stylizer (" << f.mode << ") listening on http://127.0.0.1:" << smoj_mock_server_port(server.get())
      << std::endl;
  wait_for_signal();
  out << "shutting down" << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------- serve

struct ServeFlags {
  std::string asset;
  int port = 8080;
  std::string address = "127.0.0.1";
  std::string static_dir;
};

int cmd_serve(const ServeFlags& f, std::ostream& out) {
  const Asset asset = load_asset(f.asset, true);
  ServeOptions opts;
  opts.address = f.address;
  opts.port = static_cast<unsigned short>(f.port);
  opts.asset_bytes = read_bytes(f.asset);
  opts.channels = smoj_asset_channel_count(asset.get());
  opts.static_dir = f.static_dir;
  std::unique_ptr<LiveServer> server;
  try {
    server = std::make_unique<LiveServer>(opts);
  } catch (const std::exception& e) {
    throw CliError(kExitRuntime, "cannot listen on " + f.address + ":" + std::to_string(f.port) + ": " + e.what());
  }
  out << "serving http://" << f.address << ":" << server->port() << " (asset /asset.smoj, ws /drive, ws /viewers)"
      << std::endl;
  wait_for_signal();
  server->stop();
  out << "relayed " << server->frames_relayed() << " frame(s); shut down" << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------- wiring

struct Flags {
  std::string config;
  InspectFlags inspect;
  RenderFlags render;
  AnimateFlags animate;
  FitFlags fit;
  BenchFlags bench;
  StylizeFlags stylize;
  MockFlags mock;
  ServeFlags serve;
};

std::unique_ptr<CLI::App> build_app(Flags& f) {
  auto app = std::make_unique<CLI::App>("smoj: Gaussian-splat avatar runtime");
  app->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app->require_subcommand(1);
  app->set_version_flag("--version", smoj_version());
  app->add_option("--config", f.config, "JSON config file (keys are long flag names)");

  auto* inspect = app->add_subcommand("inspect", "Print asset structure and validation report");
  inspect->add_option("--asset", f.inspect.asset, "Asset path");

  auto* render = app->add_subcommand("render", "Render views of an asset");
  render->add_option("--asset", f.render.asset, "Asset path");
  render->add_option("--out", f.render.out, "Output directory");
  render->add_option("--turntable", f.render.turntable, "Number of turntable views (0 = frontal)")
      ->check(CLI::NonNegativeNumber);
  render->add_option("--preset", f.render.preset, "Emotion preset");
  render->add_option("--weights", f.render.weights, "Comma-separated blend weights");
  add_view_flags(render, f.render.view);

  auto* animate = app->add_subcommand("animate", "Render a weight timeline to frames");
  animate->add_option("--asset", f.animate.asset, "Asset path");
  animate->add_option("--timeline", f.animate.timeline, "Timeline file");
  animate->add_option("--out", f.animate.out, "Output directory");
  animate->add_option("--fps", f.animate.fps, "Output frame rate")->check(CLI::PositiveNumber);
  add_view_flags(animate, f.animate.view);

  auto* fit = app->add_subcommand("fit", "Fit a splat set to rendered targets");
  fit->add_option("--targets", f.fit.targets, "Directory with cameras.txt and view_NNN.{rgb,alpha}.smim");
  fit->add_option("--init", f.fit.init, "Initial asset");
  fit->add_option("--out", f.fit.out, "Output asset path");
  fit->add_option("--iterations", f.fit.iterations, "Iterations")->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", f.fit.seed, "Seed for perturbation and view sampling");
  fit->add_option("--perturb-position", f.fit.perturb_position, "Init position noise sigma")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--perturb-color", f.fit.perturb_color, "Init color noise sigma")->check(CLI::NonNegativeNumber);
  fit->add_option("--views-per-iteration", f.fit.views_per_iteration, "Views per iteration (0 = all)")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--lambda-normal", f.fit.lambda_normal, "Normal loss weight")->check(CLI::NonNegativeNumber);
  fit->add_option("--lambda-dist", f.fit.lambda_dist, "Distortion loss weight")->check(CLI::NonNegativeNumber);
  fit->add_option("--schedule-fraction", f.fit.schedule_fraction, "Progress at which gated terms start")
      ->check(CLI::Range(0.0, 1.0));
  fit->add_option("--log-every", f.fit.log_every, "Print every N iterations (0 = quiet)")
      ->check(CLI::NonNegativeNumber);
  add_view_flags(fit, f.fit.view);

  auto* bench = app->add_subcommand("bench", "Measure blend+render throughput");
  bench->add_option("--asset", f.bench.asset, "Asset path (default: synthetic assets per --counts)");
  bench->add_option("--resolutions", f.bench.resolutions, "Comma-separated square sizes");
  bench->add_option("--counts", f.bench.counts, "Comma-separated splat counts");
  bench->add_option("--frames", f.bench.frames, "Timed frames per cell");
  bench->add_option("--warmup", f.bench.warmup, "Untimed frames per cell")->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", f.bench.seed, "Synthetic asset seed");
  bench->add_option("--format", f.bench.format, "tsv or json");
  add_view_flags(bench, f.bench.view);

  auto* stylize = app->add_subcommand("stylize", "Send a PNG to the stylization service");
  stylize->add_option("--input", f.stylize.input, "Input PNG");
  stylize->add_option("--out", f.stylize.out, "Output PNG");
  stylize->add_option("--endpoint", f.stylize.endpoint, "Service base URL");
  stylize->add_option("--prompt", f.stylize.prompt, "Style prompt");
  stylize->add_option("--strength", f.stylize.strength, "Style strength [0,1]");
  stylize->add_option("--edge", f.stylize.edge, "Edge condition strength [0,1]");
  stylize->add_option("--identity", f.stylize.identity, "Identity preservation [0,1]");
  stylize->add_option("--timeout", f.stylize.timeout, "Timeout in seconds");

  auto* mock = app->add_subcommand("mock-stylizer", "Run the mock stylization service");
  mock->add_option("--port", f.mock.port, "Port (0 = any)")->check(CLI::Range(0, 65535));
  mock->add_option("--mode", f.mock.mode, "echo, tint, fail or slow")
      ->check(CLI::IsMember({"echo", "tint", "fail", "slow"}));
  mock->add_option("--slow-seconds", f.mock.slow_seconds, "Delay for slow mode")->check(CLI::PositiveNumber);

  auto* serve = app->add_subcommand("serve", "Serve the asset, viewer bundle and live-drive socket");
  serve->add_option("--asset", f.serve.asset, "Asset path");
  serve->add_option("--port", f.serve.port, "Port (0 = any)")->check(CLI::Range(0, 65535));
  serve->add_option("--address", f.serve.address, "Bind address");
  serve->add_option("--static", f.serve.static_dir, "Viewer bundle directory");

  for (auto* sub : app->get_subcommands({})) {
    sub->add_option("--config", f.config, "JSON config file (keys are long flag names)");
  }
  return app;
}

std::string env_name(const std::string& flag) {
  std::string out = "SMOJ_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string json_scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v.get<double>();
    return ss.str();
  }
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + json_scalar(e, key);
    return out;
  }
  throw CliError(kExitUsage, "config key '" + key + "': unsupported value type");
}

}  // namespace

EnvMap process_env() {
  EnvMap env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.compare(0, 5, "SMOJ_") == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

std::vector<std::string> resolve_arguments(const std::vector<std::string>& args, const EnvMap& env,
                                           std::ostream& err) {
  std::vector<std::string> rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (const auto it = env.find("SMOJ_CONFIG"); it != env.end()) config = it->second;

  Flags scratch;
  const auto app = build_app(scratch);
  std::size_t sub_index = rest.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i].empty() || rest[i][0] == '-') continue;
    try {
      sub = app->get_subcommand(rest[i]);
      sub_index = i;
    } catch (const CLI::OptionNotFound&) {
    }
    break;
  }
  if (!sub) return rest;

  std::vector<std::string> names;
  for (const auto* opt : sub->get_options()) {
    for (const auto& ln : opt->get_lnames()) {
      if (ln != "config" && ln != "help") names.push_back(ln);
    }
  }

  std::vector<std::string> file_args;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw CliError(kExitUsage, "cannot open config file '" + config + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CliError(kExitParse, "config file '" + config + "': " + e.what());
    }
    if (!doc.is_object()) throw CliError(kExitParse, "config file '" + config + "' must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (std::find(names.begin(), names.end(), flag) == names.end()) {
        err << "note: config key '" << key << "' does not apply to '" << sub->get_name() << "'\n";
        continue;
      }
      file_args.push_back("--" + flag + "=" + json_scalar(value, key));
    }
  }

  std::vector<std::string> env_args;
  for (const auto& n : names) {
    if (const auto it = env.find(env_name(n)); it != env.end()) env_args.push_back("--" + n + "=" + it->second);
  }

  std::vector<std::string> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(sub_index) + 1);
  out.insert(out.end(), file_args.begin(), file_args.end());
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(sub_index) + 1, rest.end());
  out.insert(out.end(), env_args.begin(), env_args.end());
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvMap& env) {
  Flags f;
  try {
    const auto resolved = resolve_arguments(args, env, err);
    const auto app = build_app(f);
    std::vector<std::string> reversed(resolved.rbegin(), resolved.rend());
    try {
      app->parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app->exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    const auto* sub = app->get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "inspect") return cmd_inspect(f.inspect, out);
    if (name == "render") return cmd_render(f.render, out);
    if (name == "animate") return cmd_animate(f.animate, out);
    if (name == "fit") return cmd_fit(f.fit, out);
    if (name == "bench") return cmd_bench(f.bench, out);
    if (name == "stylize") return cmd_stylize(f.stylize, out);
    if (name == "mock-stylizer") return cmd_mock(f.mock, out);
    if (name == "serve") return cmd_serve(f.serve, out);
    err << "error: unknown subcommand\n";
    return kExitUsage;
  } catch (const CliError& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace smoj::cli
