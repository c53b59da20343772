/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the smoj Gaussian-splat avatar runtime.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns smoj_status; on failure the message is
 * available from smoj_last_error() on the calling thread until the next call.
 * Buffer-filling calls take a capacity and report the required count, so a
 * first call with capacity 0 sizes the buffer.
 */
#ifndef SMOJ_SMOJ_H
#define SMOJ_SMOJ_H

#include <stddef.h>
#include <stdint.h>

#if defined(SMOJ_BUILDING_LIBRARY)
#define SMOJ_API __attribute__((visibility("default")))
#else
#define SMOJ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum smoj_status {
  SMOJ_OK = 0,
  SMOJ_ERR_INVALID_ARGUMENT = 1,
  SMOJ_ERR_PARSE = 2,
  SMOJ_ERR_VALIDATION = 3,
  SMOJ_ERR_RUNTIME = 4,
  SMOJ_ERR_IO = 5,
  SMOJ_ERR_TIMEOUT = 6,
  SMOJ_ERR_SERVICE = 7,
  SMOJ_ERR_OUT_OF_MEMORY = 8,
  SMOJ_ERR_BUFFER_TOO_SMALL = 9
} smoj_status;

SMOJ_API const char* smoj_last_error(void);
/* Byte offset of the last parse error, or -1. */
SMOJ_API int64_t smoj_last_error_offset(void);
SMOJ_API const char* smoj_version(void);

typedef struct smoj_asset smoj_asset;
typedef struct smoj_set smoj_set;
typedef struct smoj_image smoj_image;
typedef struct smoj_report smoj_report;
typedef struct smoj_timeline smoj_timeline;
typedef struct smoj_blob smoj_blob;
typedef struct smoj_fit_history smoj_fit_history;
typedef struct smoj_weights smoj_weights;
typedef struct smoj_mock_server smoj_mock_server;

/* Same memory layout as the internal splat record: 14 floats. Orientation
 * is (w, x, y, z). */
typedef struct smoj_gaussian {
  float position[3];
  float scale[3];
  float orientation[4];
  float color[3];
  float opacity;
} smoj_gaussian;

/* Pinhole camera, OpenCV convention (x right, y down, +z forward).
 * rotation is world-to-camera, row-major. */
typedef struct smoj_camera {
  double rotation[9];
  double translation[3];
  double fx, fy, cx, cy;
  int32_t width, height;
} smoj_camera;

enum { SMOJ_MODE_3DGS = 0, SMOJ_MODE_2DGS = 1 };

typedef struct smoj_render_config {
  int32_t mode;
  int32_t tile_size;
  double saturation;
  int32_t early_termination;
  float background[3];
  int32_t threads; /* 0 = hardware concurrency */
  double near_plane;
} smoj_render_config;

SMOJ_API void smoj_render_config_default(smoj_render_config* cfg);

/* ---- byte blobs ---- */
SMOJ_API const uint8_t* smoj_blob_data(const smoj_blob* blob);
SMOJ_API size_t smoj_blob_size(const smoj_blob* blob);
SMOJ_API void smoj_blob_free(smoj_blob* blob);

/* ---- text reports ---- */
SMOJ_API size_t smoj_report_count(const smoj_report* report);
SMOJ_API const char* smoj_report_line(const smoj_report* report, size_t index);
SMOJ_API void smoj_report_free(smoj_report* report);

/* ---- assets ---- */
/* validate != 0 rejects well-formed files whose contents violate invariants
 * (SMOJ_ERR_VALIDATION). Parse failures return SMOJ_ERR_PARSE with an offset. */
SMOJ_API smoj_status smoj_asset_load(const char* path, int validate, smoj_asset** out);
SMOJ_API smoj_status smoj_asset_decode(const uint8_t* data, size_t size, int validate, smoj_asset** out);
SMOJ_API smoj_status smoj_asset_save(const smoj_asset* asset, const char* path, size_t* bytes_written);
SMOJ_API smoj_status smoj_asset_encode(const smoj_asset* asset, smoj_blob** out);
SMOJ_API smoj_status smoj_asset_synthetic(size_t splats, uint64_t seed, smoj_asset** out);
SMOJ_API smoj_status smoj_asset_random(size_t splats, size_t channels, uint64_t seed, smoj_asset** out);
/* Builds an asset from a rest set and k component sets (copied). Names may be
 * NULL for the default FACS list. */
SMOJ_API smoj_status smoj_asset_create(const smoj_set* rest, const smoj_set* const* components, size_t k,
                                       const char* const* names, smoj_asset** out);
SMOJ_API void smoj_asset_free(smoj_asset* asset);
SMOJ_API size_t smoj_asset_splat_count(const smoj_asset* asset);
SMOJ_API size_t smoj_asset_channel_count(const smoj_asset* asset);
SMOJ_API const char* smoj_asset_channel_name(const smoj_asset* asset, size_t index);
/* Copies of the rest set or component `index`. */
SMOJ_API smoj_status smoj_asset_rest(const smoj_asset* asset, smoj_set** out);
SMOJ_API smoj_status smoj_asset_component(const smoj_asset* asset, size_t index, smoj_set** out);
/* One line per violation; empty report means valid. */
SMOJ_API smoj_status smoj_asset_validate(const smoj_asset* asset, smoj_report** out);

typedef struct smoj_field_delta {
  double max_abs;
  double mean_abs;
} smoj_field_delta;

typedef struct smoj_component_delta {
  smoj_field_delta position, scale, orientation, color, opacity;
  uint64_t changed_splats;
} smoj_component_delta;

SMOJ_API smoj_status smoj_asset_component_deltas(const smoj_asset* asset, smoj_component_delta* out,
                                                 size_t capacity, size_t* count);

/* ---- splat sets ---- */
SMOJ_API smoj_status smoj_set_create(size_t count, smoj_set** out);
SMOJ_API smoj_status smoj_set_copy(const smoj_set* set, smoj_set** out);
SMOJ_API void smoj_set_free(smoj_set* set);
SMOJ_API size_t smoj_set_size(const smoj_set* set);
/* Contiguous splats, valid until the set is resized or freed. */
SMOJ_API smoj_gaussian* smoj_set_data(smoj_set* set);
SMOJ_API const smoj_gaussian* smoj_set_data_const(const smoj_set* set);
SMOJ_API smoj_status smoj_set_random(size_t count, uint64_t seed, double extent, smoj_set** out);

/* ---- animation ---- */
/* Writes the posed set into `out` (resized as needed). */
SMOJ_API smoj_status smoj_blend(const smoj_asset* asset, const float* weights, size_t count, smoj_set* out);
SMOJ_API size_t smoj_emotion_preset_count(void);
SMOJ_API const char* smoj_emotion_preset_name(size_t index);
SMOJ_API smoj_status smoj_emotion_preset(const char* name, float* weights, size_t count);

SMOJ_API smoj_status smoj_timeline_load(const char* path, smoj_timeline** out);
SMOJ_API smoj_status smoj_timeline_parse(const char* text, smoj_timeline** out);
SMOJ_API void smoj_timeline_free(smoj_timeline* timeline);
/* SMOJ_ERR_VALIDATION if the header's channel order differs from the asset's. */
SMOJ_API smoj_status smoj_timeline_check(const smoj_timeline* timeline, const smoj_asset* asset);
SMOJ_API size_t smoj_timeline_channel_count(const smoj_timeline* timeline);
/* Sample times first + i / fps up to the last keyframe. */
SMOJ_API smoj_status smoj_timeline_sample_times(const smoj_timeline* timeline, double fps, double* out,
                                                size_t capacity, size_t* count);
SMOJ_API smoj_status smoj_timeline_weights_at(const smoj_timeline* timeline, double t, float* weights,
                                              size_t count);

/* ---- rendering ---- */
SMOJ_API smoj_status smoj_camera_look_at(const double eye[3], const double target[3], const double up[3],
                                         int32_t width, int32_t height, double fov_y, smoj_camera* out);
SMOJ_API smoj_status smoj_turntable_cameras(const smoj_set* set, size_t views, double radius, int32_t width,
                                            int32_t height, double fov_y, smoj_camera* out);
SMOJ_API smoj_status smoj_cameras_write(const char* path, const smoj_camera* cameras, size_t count);
SMOJ_API smoj_status smoj_cameras_read(const char* path, smoj_camera* out, size_t capacity, size_t* count);

SMOJ_API smoj_status smoj_render(const smoj_set* set, const smoj_camera* camera, const smoj_render_config* cfg,
                                 smoj_image** out);
SMOJ_API void smoj_image_free(smoj_image* image);
SMOJ_API int32_t smoj_image_width(const smoj_image* image);
SMOJ_API int32_t smoj_image_height(const smoj_image* image);
/* H*W*3, H*W, H*W, H*W*3 floats. */
SMOJ_API const float* smoj_image_rgb(const smoj_image* image);
SMOJ_API const float* smoj_image_alpha(const smoj_image* image);
SMOJ_API const float* smoj_image_depth(const smoj_image* image);
SMOJ_API const float* smoj_image_normal(const smoj_image* image);
/* 8-bit RGB PNG of the color buffer. */
SMOJ_API smoj_status smoj_image_encode_png(const smoj_image* image, smoj_blob** out);
SMOJ_API smoj_status smoj_image_write_png(const smoj_image* image, const char* path);
/* buffer: "rgb", "alpha", "depth", or "normal". */
SMOJ_API smoj_status smoj_image_write_raw(const smoj_image* image, const char* buffer, const char* path);

/* SMIM raw buffers. Fills up to capacity floats and reports the shape. */
SMOJ_API smoj_status smoj_raw_read(const char* path, int32_t* height, int32_t* width, int32_t* channels,
                                   float* data, size_t capacity, size_t* count);
SMOJ_API smoj_status smoj_raw_write(const char* path, int32_t height, int32_t width, int32_t channels,
                                    const float* data);

/* ---- fitting ---- */
typedef struct smoj_fit_config {
  int32_t iterations;
  double lr_position, lr_scale, lr_rotation, lr_color, lr_opacity;
  double beta1, beta2, epsilon;
  uint64_t seed;
  int32_t views_per_iteration; /* 0 = all */
  double lambda_lpips, lambda_normal, lambda_dist, schedule_fraction;
  smoj_render_config render;
} smoj_fit_config;

typedef struct smoj_fit_iteration {
  int32_t iteration;
  double total, render, normal, dist;
} smoj_fit_iteration;

typedef void (*smoj_fit_callback)(const smoj_fit_iteration* report, void* user);

SMOJ_API void smoj_fit_config_default(smoj_fit_config* cfg);
/* Targets: per view an H*W*3 rgb and an H*W alpha buffer matching the
 * camera. A diverged run still returns SMOJ_OK; check
 * smoj_fit_history_diverged. */
SMOJ_API smoj_status smoj_fit(const smoj_set* init, const smoj_camera* cameras, const float* const* rgb,
                              const float* const* alpha, size_t views, const smoj_fit_config* cfg,
                              smoj_fit_callback callback, void* user, smoj_set** out, smoj_fit_history** history);
SMOJ_API size_t smoj_fit_history_size(const smoj_fit_history* history);
SMOJ_API smoj_status smoj_fit_history_get(const smoj_fit_history* history, size_t index, smoj_fit_iteration* out);
SMOJ_API int smoj_fit_history_diverged(const smoj_fit_history* history);
SMOJ_API void smoj_fit_history_free(smoj_fit_history* history);
/* PSNR (dB) of each view's rendered rgb against the target rgb. */
SMOJ_API smoj_status smoj_view_psnr(const smoj_set* set, const smoj_camera* cameras, const float* const* rgb,
                                    size_t views, const smoj_render_config* cfg, double* out);

/* ---- expression features ---- */
SMOJ_API smoj_status smoj_weights_load(const char* manifest, smoj_weights** out);
SMOJ_API void smoj_weights_free(smoj_weights* weights);
SMOJ_API smoj_status smoj_encode_expression(const smoj_weights* weights, const double f_bs[16],
                                            const double f_mm[100], double f_exp[16]);
SMOJ_API smoj_status smoj_build_drive(const smoj_weights* weights, const double f_exp[16], const double* f_id,
                                      size_t id_dim, double* out, size_t capacity, size_t* count);
/* Row-major matrices. out receives n x d_out. */
SMOJ_API smoj_status smoj_cross_attention(const smoj_weights* weights, const char* site, const double* f_in,
                                          size_t n, size_t d_in, const double* f_ctx, size_t m, size_t d_ctx,
                                          double* out, size_t capacity, size_t* count);
SMOJ_API smoj_status smoj_dual_cross_attention(const smoj_weights* weights, const char* site, const double* f_sty,
                                               size_t n, size_t d, const double* f_ref, size_t m_ref,
                                               const double* f_txt, size_t m_txt, size_t d_ctx, double* out,
                                               size_t capacity, size_t* count);

/* ---- stylization service ---- */
typedef struct smoj_stylize_params {
  const char* prompt;
  double strength, edge, identity;
  double timeout_seconds;
} smoj_stylize_params;

typedef struct smoj_stylize_info {
  double service_latency;
  double elapsed;
  char service_mode[32];
} smoj_stylize_info;

SMOJ_API smoj_status smoj_stylize(const char* endpoint, const uint8_t* png, size_t size,
                                  const smoj_stylize_params* params, smoj_blob** out, smoj_stylize_info* info);
/* mode: "echo", "tint", "fail", or "slow"; port 0 picks a free port. */
SMOJ_API smoj_status smoj_mock_server_start(int32_t port, const char* mode, double slow_seconds,
                                            smoj_mock_server** out);
SMOJ_API int32_t smoj_mock_server_port(const smoj_mock_server* server);
SMOJ_API void smoj_mock_server_free(smoj_mock_server* server);

#ifdef __cplusplus
}
#endif

#endif /* SMOJ_SMOJ_H */
