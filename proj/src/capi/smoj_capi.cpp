// SPDX-License-Identifier: Apache-2.0
#include "smoj/smoj.h"

#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "smoj/animation.hpp"
#include "smoj/asset_io.hpp"
#include "smoj/error.hpp"
#include "smoj/expression.hpp"
#include "smoj/fit.hpp"
#include "smoj/image_io.hpp"
#include "smoj/render.hpp"
#include "smoj/stylizer.hpp"
#include "smoj/synth.hpp"

static_assert(sizeof(smoj_gaussian) == sizeof(smoj::Gaussian), "smoj_gaussian must mirror smoj::Gaussian");
static_assert(offsetof(smoj_gaussian, opacity) == offsetof(smoj::Gaussian, opacity));

struct smoj_asset {
  smoj::AvatarAsset asset;
};
struct smoj_set {
  smoj::GaussianSet set;
};
struct smoj_image {
  smoj::render::RenderOutput out;
};
struct smoj_report {
  std::vector<std::string> lines;
};
struct smoj_timeline {
  smoj::anim::BlendTimeline timeline;
};
struct smoj_blob {
  std::vector<std::uint8_t> bytes;
};
struct smoj_fit_history {
  std::vector<smoj::fit::IterationReport> reports;
  bool diverged = false;
};
struct smoj_weights {
  smoj::expr::PipelineWeights weights;
};
struct smoj_mock_server {
  smoj::stylize::MockServer server;
  smoj_mock_server(int port, smoj::stylize::MockOptions opts) : server(port, opts) {}
};

namespace {

thread_local std::string g_last_error;
thread_local std::int64_t g_last_offset = -1;

smoj_status fail(smoj_status status, const std::string& message, std::int64_t offset = -1) {
  g_last_error = message;
  g_last_offset = offset;
  return status;
}

smoj_status from_code(smoj::ErrorCode code) {
  switch (code) {
    case smoj::ErrorCode::kInvalidArgument:
      return SMOJ_ERR_INVALID_ARGUMENT;
    case smoj::ErrorCode::kParse:
      return SMOJ_ERR_PARSE;
    case smoj::ErrorCode::kValidation:
      return SMOJ_ERR_VALIDATION;
    case smoj::ErrorCode::kRuntime:
      return SMOJ_ERR_RUNTIME;
    case smoj::ErrorCode::kIo:
      return SMOJ_ERR_IO;
    case smoj::ErrorCode::kTimeout:
      return SMOJ_ERR_TIMEOUT;
    case smoj::ErrorCode::kService:
      return SMOJ_ERR_SERVICE;
  }
  return SMOJ_ERR_RUNTIME;
}

template <class Fn>
smoj_status guard(Fn&& fn) {
  try {
    g_last_error.clear();
    g_last_offset = -1;
    return fn();
  } catch (const smoj::ParseError& e) {
    return fail(SMOJ_ERR_PARSE, e.what(), static_cast<std::int64_t>(e.offset()));
  } catch (const smoj::Error& e) {
    return fail(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SMOJ_ERR_OUT_OF_MEMORY, "out of memory");
  } catch (const std::exception& e) {
    return fail(SMOJ_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(SMOJ_ERR_RUNTIME, "unknown error");
  }
}

#define SMOJ_REQUIRE(cond, what) \
  if (!(cond)) return fail(SMOJ_ERR_INVALID_ARGUMENT, what)

smoj::Camera to_camera(const smoj_camera& c) {
  smoj::Camera cam;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) cam.rotation(r, k) = c.rotation[3 * r + k];
    cam.translation[r] = c.translation[r];
  }
  cam.fx = c.fx;
  cam.fy = c.fy;
  cam.cx = c.cx;
  cam.cy = c.cy;
  cam.width = c.width;
  cam.height = c.height;
  return cam;
}

smoj_camera from_camera(const smoj::Camera& cam) {
  smoj_camera c{};
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c.rotation[3 * r + k] = cam.rotation(r, k);
    c.translation[r] = cam.translation[r];
  }
  c.fx = cam.fx;
  c.fy = cam.fy;
  c.cx = cam.cx;
  c.cy = cam.cy;
  c.width = cam.width;
  c.height = cam.height;
  return c;
}

smoj::render::RenderConfig to_config(const smoj_render_config* c) {
  smoj::render::RenderConfig cfg;
  if (!c) return cfg;
  if (c->mode != SMOJ_MODE_3DGS && c->mode != SMOJ_MODE_2DGS) {
    throw smoj::Error(smoj::ErrorCode::kInvalidArgument, "render config: unknown mode");
  }
  cfg.mode = c->mode == SMOJ_MODE_2DGS ? smoj::render::Mode::kSurfel : smoj::render::Mode::kVolumetric;
  cfg.tile_size = c->tile_size;
  cfg.saturation = c->saturation;
  cfg.early_termination = c->early_termination != 0;
  for (int i = 0; i < 3; ++i) cfg.background[i] = c->background[i];
  cfg.threads = c->threads;
  cfg.near_plane = c->near_plane;
  return cfg;
}

smoj_status fill_count(size_t needed, size_t capacity, size_t* count) {
  if (count) *count = needed;
  if (capacity < needed) return fail(SMOJ_ERR_BUFFER_TOO_SMALL, "buffer too small: need " + std::to_string(needed));
  return SMOJ_OK;
}

void copy_matrix(const smoj::expr::Matrix& m, double* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
  }
}

smoj::expr::Matrix from_rows(const double* data, size_t rows, size_t cols) {
  smoj::expr::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < rows; ++r) {
    for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r * cols + c];
  }
  return m;
}

const smoj::expr::AttentionSite& find_site(const smoj_weights* w, const char* site) {
  const auto it = w->weights.sites.find(site);
  if (it == w->weights.sites.end()) {
    throw smoj::Error(smoj::ErrorCode::kInvalidArgument, std::string("unknown attention site '") + site + "'");
  }
  return it->second;
}

std::vector<smoj::fit::TargetView> make_targets(const smoj_camera* cameras, const float* const* rgb,
                                                const float* const* alpha, size_t views) {
  std::vector<smoj::fit::TargetView> targets(views);
  for (size_t v = 0; v < views; ++v) {
    targets[v].camera = to_camera(cameras[v]);
    const size_t n = static_cast<size_t>(std::max(0, cameras[v].width)) * static_cast<size_t>(std::max(0, cameras[v].height));
    if (!rgb[v]) throw smoj::Error(smoj::ErrorCode::kInvalidArgument, "fit: null rgb target");
    targets[v].rgb.assign(rgb[v], rgb[v] + 3 * n);
    if (alpha) {
      if (!alpha[v]) throw smoj::Error(smoj::ErrorCode::kInvalidArgument, "fit: null alpha target");
      targets[v].alpha.assign(alpha[v], alpha[v] + n);
    } else {
      targets[v].alpha.assign(n, 0.0);
    }
  }
  return targets;
}

}  // namespace

extern "C" {

const char* smoj_last_error(void) { return g_last_error.c_str(); }
int64_t smoj_last_error_offset(void) { return g_last_offset; }
const char* smoj_version(void) { return "1.0.0"; }

void smoj_render_config_default(smoj_render_config* cfg) {
  if (!cfg) return;
  const smoj::render::RenderConfig d;
  cfg->mode = SMOJ_MODE_3DGS;
  cfg->tile_size = d.tile_size;
  cfg->saturation = d.saturation;
  cfg->early_termination = d.early_termination ? 1 : 0;
  for (int i = 0; i < 3; ++i) cfg->background[i] = d.background[i];
  cfg->threads = d.threads;
  cfg->near_plane = d.near_plane;
}

const uint8_t* smoj_blob_data(const smoj_blob* blob) { return blob ? blob->bytes.data() : nullptr; }
size_t smoj_blob_size(const smoj_blob* blob) { return blob ? blob->bytes.size() : 0; }
void smoj_blob_free(smoj_blob* blob) { delete blob; }

size_t smoj_report_count(const smoj_report* report) { return report ? report->lines.size() : 0; }
const char* smoj_report_line(const smoj_report* report, size_t index) {
  if (!report || index >= report->lines.size()) return nullptr;
  return report->lines[index].c_str();
}
void smoj_report_free(smoj_report* report) { delete report; }

smoj_status smoj_asset_load(const char* path, int validate, smoj_asset** out) {
  SMOJ_REQUIRE(path && out, "smoj_asset_load: null argument");
  return guard([&] {
    smoj::LoadOptions opts;
    opts.validate = validate != 0;
    *out = new smoj_asset{smoj::load_asset(path, opts)};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_decode(const uint8_t* data, size_t size, int validate, smoj_asset** out) {
  SMOJ_REQUIRE((data || size == 0) && out, "smoj_asset_decode: null argument");
  return guard([&] {
    smoj::LoadOptions opts;
    opts.validate = validate != 0;
    *out = new smoj_asset{smoj::decode_asset(std::span(data, size), opts)};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_save(const smoj_asset* asset, const char* path, size_t* bytes_written) {
  SMOJ_REQUIRE(asset && path, "smoj_asset_save: null argument");
  return guard([&] {
    const size_t n = smoj::save_asset(asset->asset, path);
    if (bytes_written) *bytes_written = n;
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_encode(const smoj_asset* asset, smoj_blob** out) {
  SMOJ_REQUIRE(asset && out, "smoj_asset_encode: null argument");
  return guard([&] {
    *out = new smoj_blob{smoj::encode_asset(asset->asset)};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_synthetic(size_t splats, uint64_t seed, smoj_asset** out) {
  SMOJ_REQUIRE(out, "smoj_asset_synthetic: null argument");
  return guard([&] {
    smoj::SynthOptions opts;
    opts.splats = splats;
    opts.seed = seed;
    *out = new smoj_asset{smoj::make_synthetic_avatar(opts)};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_random(size_t splats, size_t channels, uint64_t seed, smoj_asset** out) {
  SMOJ_REQUIRE(out, "smoj_asset_random: null argument");
  return guard([&] {
    *out = new smoj_asset{smoj::make_random_asset(splats, channels, seed)};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_create(const smoj_set* rest, const smoj_set* const* components, size_t k,
                              const char* const* names, smoj_asset** out) {
  SMOJ_REQUIRE(rest && (components || k == 0) && out, "smoj_asset_create: null argument");
  return guard([&] {
    smoj::AvatarAsset a;
    a.rest = rest->set;
    for (size_t i = 0; i < k; ++i) {
      if (!components[i]) return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_asset_create: null component");
      a.components.push_back(components[i]->set);
    }
    if (names) {
      for (size_t i = 0; i < k; ++i) {
        if (!names[i]) return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_asset_create: null channel name");
        a.channel_names.emplace_back(names[i]);
      }
    } else {
      a.channel_names = smoj::default_channel_names();
      a.channel_names.resize(k);
    }
    *out = new smoj_asset{std::move(a)};
    return SMOJ_OK;
  });
}

void smoj_asset_free(smoj_asset* asset) { delete asset; }
size_t smoj_asset_splat_count(const smoj_asset* asset) { return asset ? asset->asset.splat_count() : 0; }
size_t smoj_asset_channel_count(const smoj_asset* asset) { return asset ? asset->asset.channel_count() : 0; }
const char* smoj_asset_channel_name(const smoj_asset* asset, size_t index) {
  if (!asset || index >= asset->asset.channel_names.size()) return nullptr;
  return asset->asset.channel_names[index].c_str();
}

smoj_status smoj_asset_rest(const smoj_asset* asset, smoj_set** out) {
  SMOJ_REQUIRE(asset && out, "smoj_asset_rest: null argument");
  return guard([&] {
    *out = new smoj_set{asset->asset.rest};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_component(const smoj_asset* asset, size_t index, smoj_set** out) {
  SMOJ_REQUIRE(asset && out, "smoj_asset_component: null argument");
  SMOJ_REQUIRE(index < asset->asset.components.size(), "smoj_asset_component: index out of range");
  return guard([&] {
    *out = new smoj_set{asset->asset.components[index]};
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_validate(const smoj_asset* asset, smoj_report** out) {
  SMOJ_REQUIRE(asset && out, "smoj_asset_validate: null argument");
  return guard([&] {
    auto report = std::make_unique<smoj_report>();
    for (const auto& v : smoj::validate_asset(asset->asset)) report->lines.push_back(smoj::format_violation(v));
    *out = report.release();
    return SMOJ_OK;
  });
}

smoj_status smoj_asset_component_deltas(const smoj_asset* asset, smoj_component_delta* out, size_t capacity,
                                        size_t* count) {
  SMOJ_REQUIRE(asset && (out || capacity == 0), "smoj_asset_component_deltas: null argument");
  return guard([&] {
    const auto deltas = smoj::component_deltas(asset->asset);
    if (fill_count(deltas.size(), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    auto conv = [](const smoj::FieldDelta& f) { return smoj_field_delta{f.max_abs, f.mean_abs}; };
    for (size_t i = 0; i < deltas.size(); ++i) {
      const auto& d = deltas[i];
      out[i] = smoj_component_delta{conv(d.position), conv(d.scale), conv(d.orientation), conv(d.color),
                                    conv(d.opacity), static_cast<uint64_t>(d.changed_splats)};
    }
    return SMOJ_OK;
  });
}

smoj_status smoj_set_create(size_t count, smoj_set** out) {
  SMOJ_REQUIRE(out, "smoj_set_create: null argument");
  return guard([&] {
    auto s = std::make_unique<smoj_set>();
    s->set.gaussians.resize(count);
    *out = s.release();
    return SMOJ_OK;
  });
}

smoj_status smoj_set_copy(const smoj_set* set, smoj_set** out) {
  SMOJ_REQUIRE(set && out, "smoj_set_copy: null argument");
  return guard([&] {
    *out = new smoj_set{set->set};
    return SMOJ_OK;
  });
}

void smoj_set_free(smoj_set* set) { delete set; }
size_t smoj_set_size(const smoj_set* set) { return set ? set->set.size() : 0; }
smoj_gaussian* smoj_set_data(smoj_set* set) {
  return set ? reinterpret_cast<smoj_gaussian*>(set->set.gaussians.data()) : nullptr;
}
const smoj_gaussian* smoj_set_data_const(const smoj_set* set) {
  return set ? reinterpret_cast<const smoj_gaussian*>(set->set.gaussians.data()) : nullptr;
}

smoj_status smoj_set_random(size_t count, uint64_t seed, double extent, smoj_set** out) {
  SMOJ_REQUIRE(out, "smoj_set_random: null argument");
  return guard([&] {
    *out = new smoj_set{smoj::make_random_set(count, seed, extent)};
    return SMOJ_OK;
  });
}

smoj_status smoj_blend(const smoj_asset* asset, const float* weights, size_t count, smoj_set* out) {
  SMOJ_REQUIRE(asset && (weights || count == 0) && out, "smoj_blend: null argument");
  return guard([&] {
    const smoj::BlendWeights w(std::vector<float>(weights, weights + count));
    smoj::anim::blend_into(asset->asset, w, out->set);
    return SMOJ_OK;
  });
}

size_t smoj_emotion_preset_count(void) { return smoj::anim::emotion_preset_names().size(); }

const char* smoj_emotion_preset_name(size_t index) {
  static const std::vector<std::string> names = smoj::anim::emotion_preset_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

smoj_status smoj_emotion_preset(const char* name, float* weights, size_t count) {
  SMOJ_REQUIRE(name && weights, "smoj_emotion_preset: null argument");
  return guard([&] {
    const auto w = smoj::anim::emotion_preset(name);
    if (count != w.size()) {
      return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_emotion_preset: expected " + std::to_string(w.size()) + " weights");
    }
    std::copy(w.weights.begin(), w.weights.end(), weights);
    return SMOJ_OK;
  });
}

smoj_status smoj_timeline_load(const char* path, smoj_timeline** out) {
  SMOJ_REQUIRE(path && out, "smoj_timeline_load: null argument");
  return guard([&] {
    *out = new smoj_timeline{smoj::anim::load_timeline(path)};
    return SMOJ_OK;
  });
}

smoj_status smoj_timeline_parse(const char* text, smoj_timeline** out) {
  SMOJ_REQUIRE(text && out, "smoj_timeline_parse: null argument");
  return guard([&] {
    *out = new smoj_timeline{smoj::anim::parse_timeline(text)};
    return SMOJ_OK;
  });
}

void smoj_timeline_free(smoj_timeline* timeline) { delete timeline; }

smoj_status smoj_timeline_check(const smoj_timeline* timeline, const smoj_asset* asset) {
  SMOJ_REQUIRE(timeline && asset, "smoj_timeline_check: null argument");
  return guard([&] {
    smoj::anim::check_timeline_channels(timeline->timeline, asset->asset);
    return SMOJ_OK;
  });
}

size_t smoj_timeline_channel_count(const smoj_timeline* timeline) {
  return timeline ? timeline->timeline.channel_names.size() : 0;
}

smoj_status smoj_timeline_sample_times(const smoj_timeline* timeline, double fps, double* out, size_t capacity,
                                       size_t* count) {
  SMOJ_REQUIRE(timeline && (out || capacity == 0), "smoj_timeline_sample_times: null argument");
  return guard([&] {
    const auto times = smoj::anim::sample_times(timeline->timeline, fps);
    if (fill_count(times.size(), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    std::copy(times.begin(), times.end(), out);
    return SMOJ_OK;
  });
}

smoj_status smoj_timeline_weights_at(const smoj_timeline* timeline, double t, float* weights, size_t count) {
  SMOJ_REQUIRE(timeline && weights, "smoj_timeline_weights_at: null argument");
  return guard([&] {
    const auto w = smoj::anim::sample_weights(timeline->timeline, t);
    if (count != w.size()) {
      return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_timeline_weights_at: expected " + std::to_string(w.size()) +
                                                 " weights");
    }
    std::copy(w.weights.begin(), w.weights.end(), weights);
    return SMOJ_OK;
  });
}

smoj_status smoj_camera_look_at(const double eye[3], const double target[3], const double up[3], int32_t width,
                                int32_t height, double fov_y, smoj_camera* out) {
  SMOJ_REQUIRE(eye && target && up && out, "smoj_camera_look_at: null argument");
  return guard([&] {
    const smoj::Camera cam = smoj::Camera::look_at(Eigen::Vector3d(eye[0], eye[1], eye[2]),
                                                   Eigen::Vector3d(target[0], target[1], target[2]),
                                                   Eigen::Vector3d(up[0], up[1], up[2]), width, height, fov_y);
    const std::string why = smoj::check_camera(cam);
    if (!why.empty()) return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_camera_look_at: " + why);
    *out = from_camera(cam);
    return SMOJ_OK;
  });
}

smoj_status smoj_turntable_cameras(const smoj_set* set, size_t views, double radius, int32_t width, int32_t height,
                                   double fov_y, smoj_camera* out) {
  SMOJ_REQUIRE(set && out, "smoj_turntable_cameras: null argument");
  return guard([&] {
    smoj::render::TurntableOptions opts;
    opts.width = width;
    opts.height = height;
    opts.fov_y = fov_y;
    const auto cams = smoj::render::turntable_cameras(set->set, static_cast<int>(views), radius, opts);
    for (size_t i = 0; i < cams.size(); ++i) out[i] = from_camera(cams[i]);
    return SMOJ_OK;
  });
}

smoj_status smoj_cameras_write(const char* path, const smoj_camera* cameras, size_t count) {
  SMOJ_REQUIRE(path && (cameras || count == 0), "smoj_cameras_write: null argument");
  return guard([&] {
    std::vector<smoj::Camera> cams;
    for (size_t i = 0; i < count; ++i) cams.push_back(to_camera(cameras[i]));
    smoj::write_cameras(path, cams);
    return SMOJ_OK;
  });
}

smoj_status smoj_cameras_read(const char* path, smoj_camera* out, size_t capacity, size_t* count) {
  SMOJ_REQUIRE(path && (out || capacity == 0), "smoj_cameras_read: null argument");
  return guard([&] {
    const auto cams = smoj::read_cameras(path);
    if (fill_count(cams.size(), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    for (size_t i = 0; i < cams.size(); ++i) out[i] = from_camera(cams[i]);
    return SMOJ_OK;
  });
}

smoj_status smoj_render(const smoj_set* set, const smoj_camera* camera, const smoj_render_config* cfg,
                        smoj_image** out) {
  SMOJ_REQUIRE(set && camera && out, "smoj_render: null argument");
  return guard([&] {
    *out = new smoj_image{smoj::render::render(set->set, to_camera(*camera), to_config(cfg))};
    return SMOJ_OK;
  });
}

void smoj_image_free(smoj_image* image) { delete image; }
int32_t smoj_image_width(const smoj_image* image) { return image ? image->out.width : 0; }
int32_t smoj_image_height(const smoj_image* image) { return image ? image->out.height : 0; }
const float* smoj_image_rgb(const smoj_image* image) { return image ? image->out.rgb.data() : nullptr; }
const float* smoj_image_alpha(const smoj_image* image) { return image ? image->out.alpha.data() : nullptr; }
const float* smoj_image_depth(const smoj_image* image) { return image ? image->out.depth.data() : nullptr; }
const float* smoj_image_normal(const smoj_image* image) { return image ? image->out.normal.data() : nullptr; }

smoj_status smoj_image_encode_png(const smoj_image* image, smoj_blob** out) {
  SMOJ_REQUIRE(image && out, "smoj_image_encode_png: null argument");
  return guard([&] {
    const auto& o = image->out;
    *out = new smoj_blob{smoj::encode_png(smoj::quantize(o.rgb, o.width, o.height, 3))};
    return SMOJ_OK;
  });
}

smoj_status smoj_image_write_png(const smoj_image* image, const char* path) {
  SMOJ_REQUIRE(image && path, "smoj_image_write_png: null argument");
  return guard([&] {
    const auto& o = image->out;
    smoj::write_png(path, smoj::quantize(o.rgb, o.width, o.height, 3));
    return SMOJ_OK;
  });
}

smoj_status smoj_image_write_raw(const smoj_image* image, const char* buffer, const char* path) {
  SMOJ_REQUIRE(image && buffer && path, "smoj_image_write_raw: null argument");
  return guard([&] {
    const std::string b = buffer;
    smoj::RawImage raw;
    if (b == "rgb") {
      raw = smoj::raw_rgb(image->out);
    } else if (b == "alpha") {
      raw = smoj::raw_alpha(image->out);
    } else if (b == "depth") {
      raw = smoj::raw_depth(image->out);
    } else if (b == "normal") {
      raw = smoj::raw_normal(image->out);
    } else {
      return fail(SMOJ_ERR_INVALID_ARGUMENT, "smoj_image_write_raw: unknown buffer '" + b + "'");
    }
    smoj::write_smim(path, raw);
    return SMOJ_OK;
  });
}

smoj_status smoj_raw_read(const char* path, int32_t* height, int32_t* width, int32_t* channels, float* data,
                          size_t capacity, size_t* count) {
  SMOJ_REQUIRE(path && (data || capacity == 0), "smoj_raw_read: null argument");
  return guard([&] {
    const smoj::RawImage raw = smoj::read_smim(path);
    if (height) *height = raw.height;
    if (width) *width = raw.width;
    if (channels) *channels = raw.channels;
    if (fill_count(raw.data.size(), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    std::copy(raw.data.begin(), raw.data.end(), data);
    return SMOJ_OK;
  });
}

smoj_status smoj_raw_write(const char* path, int32_t height, int32_t width, int32_t channels, const float* data) {
  SMOJ_REQUIRE(path && height >= 0 && width >= 0 && channels > 0, "smoj_raw_write: bad argument");
  const size_t n = static_cast<size_t>(height) * static_cast<size_t>(width) * static_cast<size_t>(channels);
  SMOJ_REQUIRE(data || n == 0, "smoj_raw_write: null data");
  return guard([&] {
    smoj::RawImage raw;
    raw.height = height;
    raw.width = width;
    raw.channels = channels;
    raw.data.assign(data, data + n);
    smoj::write_smim(path, raw);
    return SMOJ_OK;
  });
}

void smoj_fit_config_default(smoj_fit_config* cfg) {
  if (!cfg) return;
  const smoj::fit::FitConfig d;
  const smoj::loss::LossWeights w;
  cfg->iterations = d.iterations;
  cfg->lr_position = d.lr.position;
  cfg->lr_scale = d.lr.scale;
  cfg->lr_rotation = d.lr.rotation;
  cfg->lr_color = d.lr.color;
  cfg->lr_opacity = d.lr.opacity;
  cfg->beta1 = d.beta1;
  cfg->beta2 = d.beta2;
  cfg->epsilon = d.epsilon;
  cfg->seed = d.seed;
  cfg->views_per_iteration = d.views_per_iteration;
  cfg->lambda_lpips = w.lpips;
  cfg->lambda_normal = w.normal;
  cfg->lambda_dist = w.dist;
  cfg->schedule_fraction = w.schedule_fraction;
  smoj_render_config_default(&cfg->render);
}

smoj_status smoj_fit(const smoj_set* init, const smoj_camera* cameras, const float* const* rgb,
                     const float* const* alpha, size_t views, const smoj_fit_config* cfg, smoj_fit_callback callback,
                     void* user, smoj_set** out, smoj_fit_history** history) {
  SMOJ_REQUIRE(init && (cameras || views == 0) && (rgb || views == 0) && cfg && out, "smoj_fit: null argument");
  return guard([&] {
    smoj::fit::FitConfig fc;
    fc.iterations = cfg->iterations;
    fc.lr = {cfg->lr_position, cfg->lr_scale, cfg->lr_rotation, cfg->lr_color, cfg->lr_opacity};
    fc.beta1 = cfg->beta1;
    fc.beta2 = cfg->beta2;
    fc.epsilon = cfg->epsilon;
    fc.seed = cfg->seed;
    fc.views_per_iteration = cfg->views_per_iteration;
    fc.render = to_config(&cfg->render);
    if (callback) {
      fc.on_iteration = [callback, user](const smoj::fit::IterationReport& r) {
        const smoj_fit_iteration it{r.iteration, r.total, r.render, r.normal, r.dist};
        callback(&it, user);
      };
    }
    smoj::loss::LossWeights w;
    w.lpips = cfg->lambda_lpips;
    w.normal = cfg->lambda_normal;
    w.dist = cfg->lambda_dist;
    w.schedule_fraction = cfg->schedule_fraction;
    const auto targets = make_targets(cameras, rgb, alpha, views);
    smoj::fit::FitResult res = smoj::fit::fit(targets, init->set, fc, w);
    auto set = std::make_unique<smoj_set>(smoj_set{std::move(res.set)});
    if (history) *history = new smoj_fit_history{std::move(res.history), res.diverged};
    *out = set.release();
    return SMOJ_OK;
  });
}

size_t smoj_fit_history_size(const smoj_fit_history* history) { return history ? history->reports.size() : 0; }

smoj_status smoj_fit_history_get(const smoj_fit_history* history, size_t index, smoj_fit_iteration* out) {
  SMOJ_REQUIRE(history && out, "smoj_fit_history_get: null argument");
  SMOJ_REQUIRE(index < history->reports.size(), "smoj_fit_history_get: index out of range");
  const auto& r = history->reports[index];
  *out = smoj_fit_iteration{r.iteration, r.total, r.render, r.normal, r.dist};
  return SMOJ_OK;
}

int smoj_fit_history_diverged(const smoj_fit_history* history) { return history && history->diverged ? 1 : 0; }
void smoj_fit_history_free(smoj_fit_history* history) { delete history; }

smoj_status smoj_view_psnr(const smoj_set* set, const smoj_camera* cameras, const float* const* rgb, size_t views,
                           const smoj_render_config* cfg, double* out) {
  SMOJ_REQUIRE(set && cameras && rgb && out, "smoj_view_psnr: null argument");
  return guard([&] {
    const auto targets = make_targets(cameras, rgb, nullptr, views);
    const auto p = smoj::fit::view_psnr(targets, set->set, to_config(cfg));
    std::copy(p.begin(), p.end(), out);
    return SMOJ_OK;
  });
}

smoj_status smoj_weights_load(const char* manifest, smoj_weights** out) {
  SMOJ_REQUIRE(manifest && out, "smoj_weights_load: null argument");
  return guard([&] {
    *out = new smoj_weights{smoj::expr::load_weights(manifest)};
    return SMOJ_OK;
  });
}

void smoj_weights_free(smoj_weights* weights) { delete weights; }

smoj_status smoj_encode_expression(const smoj_weights* weights, const double f_bs[16], const double f_mm[100],
                                   double f_exp[16]) {
  SMOJ_REQUIRE(weights && f_bs && f_mm && f_exp, "smoj_encode_expression: null argument");
  return guard([&] {
    const auto r = smoj::expr::encode_expression(Eigen::Map<const Eigen::VectorXd>(f_bs, 16),
                                                 Eigen::Map<const Eigen::VectorXd>(f_mm, 100),
                                                 weights->weights.projection);
    for (int i = 0; i < 16; ++i) f_exp[i] = r[i];
    return SMOJ_OK;
  });
}

smoj_status smoj_build_drive(const smoj_weights* weights, const double f_exp[16], const double* f_id, size_t id_dim,
                             double* out, size_t capacity, size_t* count) {
  SMOJ_REQUIRE(weights && f_exp && (f_id || id_dim == 0) && (out || capacity == 0), "smoj_build_drive: null argument");
  return guard([&] {
    const smoj::expr::Vector id =
        id_dim ? smoj::expr::Vector(Eigen::Map<const Eigen::VectorXd>(f_id, static_cast<Eigen::Index>(id_dim)))
               : smoj::expr::Vector();
    const auto r = smoj::expr::build_drive(Eigen::Map<const Eigen::VectorXd>(f_exp, 16), id, {}, weights->weights);
    if (fill_count(static_cast<size_t>(r.fused.size()), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    for (Eigen::Index i = 0; i < r.fused.size(); ++i) out[i] = r.fused[i];
    return SMOJ_OK;
  });
}

smoj_status smoj_cross_attention(const smoj_weights* weights, const char* site, const double* f_in, size_t n,
                                 size_t d_in, const double* f_ctx, size_t m, size_t d_ctx, double* out,
                                 size_t capacity, size_t* count) {
  SMOJ_REQUIRE(weights && site && f_in && f_ctx && (out || capacity == 0), "smoj_cross_attention: null argument");
  return guard([&] {
    const auto r = smoj::expr::cross_attention(from_rows(f_in, n, d_in), from_rows(f_ctx, m, d_ctx),
                                               find_site(weights, site));
    if (fill_count(static_cast<size_t>(r.size()), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    copy_matrix(r, out);
    return SMOJ_OK;
  });
}

smoj_status smoj_dual_cross_attention(const smoj_weights* weights, const char* site, const double* f_sty, size_t n,
                                      size_t d, const double* f_ref, size_t m_ref, const double* f_txt, size_t m_txt,
                                      size_t d_ctx, double* out, size_t capacity, size_t* count) {
  SMOJ_REQUIRE(weights && site && f_sty && f_ref && f_txt && (out || capacity == 0),
               "smoj_dual_cross_attention: null argument");
  return guard([&] {
    const auto r = smoj::expr::dual_cross_attention(from_rows(f_sty, n, d), from_rows(f_ref, m_ref, d_ctx),
                                                    from_rows(f_txt, m_txt, d_ctx), find_site(weights, site));
    if (fill_count(static_cast<size_t>(r.size()), capacity, count) != SMOJ_OK) return SMOJ_ERR_BUFFER_TOO_SMALL;
    copy_matrix(r, out);
    return SMOJ_OK;
  });
}

smoj_status smoj_stylize(const char* endpoint, const uint8_t* png, size_t size, const smoj_stylize_params* params,
                         smoj_blob** out, smoj_stylize_info* info) {
  SMOJ_REQUIRE(endpoint && png && params && params->prompt && out, "smoj_stylize: null argument");
  return guard([&] {
    smoj::stylize::Request req;
    req.png.assign(png, png + size);
    req.params = {params->prompt, params->strength, params->edge, params->identity};
    req.timeout_seconds = params->timeout_seconds;
    smoj::stylize::Response res = smoj::stylize::stylize(req, endpoint);
    if (info) {
      info->service_latency = res.service_latency;
      info->elapsed = res.elapsed;
      std::memset(info->service_mode, 0, sizeof info->service_mode);
      std::strncpy(info->service_mode, res.service_mode.c_str(), sizeof info->service_mode - 1);
    }
    *out = new smoj_blob{std::move(res.png)};
    return SMOJ_OK;
  });
}

smoj_status smoj_mock_server_start(int32_t port, const char* mode, double slow_seconds, smoj_mock_server** out) {
  SMOJ_REQUIRE(mode && out, "smoj_mock_server_start: null argument");
  return guard([&] {
    smoj::stylize::MockOptions opts;
    opts.mode = smoj::stylize::parse_mock_mode(mode);
    if (slow_seconds > 0.0) opts.slow_seconds = slow_seconds;
    *out = new smoj_mock_server(port, opts);
    return SMOJ_OK;
  });
}

int32_t smoj_mock_server_port(const smoj_mock_server* server) { return server ? server->server.port() : -1; }
void smoj_mock_server_free(smoj_mock_server* server) { delete server; }

}  // extern "C"
