/* polarbev: polar birds-eye-view perception core.
 *
 * C interface over the C++ library. All functions returning int yield
 * PBEV_OK on success or an error code; pbev_last_error() describes the most
 * recent failure on the calling thread. Handle types are opaque; strings
 * returned through char** are owned by the caller and released with
 * pbev_string_free().
 */
#ifndef POLARBEV_H
#define POLARBEV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PBEV_API __declspec(dllexport)
#else
#define PBEV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define PBEV_OK 0
#define PBEV_ERR_INVALID 1  /* null or malformed argument */
#define PBEV_ERR_CONFIG 2   /* invalid configuration or input file */
#define PBEV_ERR_DOMAIN 3   /* out-of-domain value or violated invariant */
#define PBEV_ERR_INTERNAL 4 /* unexpected failure */

typedef struct pbev_rig pbev_rig;       /* camera rig */
typedef struct pbev_scene pbev_scene;   /* synthetic scene */
typedef struct pbev_map pbev_map;       /* dense (channels, rows, cols) array */
typedef struct pbev_result pbev_result; /* pipeline output */

typedef struct pbev_polar_spec {
  int32_t n_theta; /* azimuth bins over [-pi, pi) */
  int32_t n_r;     /* radial bins over [r_min, r_max) */
  double r_min;
  double r_max;
} pbev_polar_spec;

typedef struct pbev_cart_spec {
  int32_t n_x;
  int32_t n_y;
  double x_min;
  double x_max;
  double y_min;
  double y_max;
} pbev_cart_spec;

typedef struct pbev_box_cart {
  double x, y, z;    /* center, meters */
  double w, l, h;    /* dimensions, meters */
  double yaw;        /* heading vs the x-axis, radians in (-pi, pi] */
  double vx, vy;     /* planar velocity, m/s */
  int32_t class_id;
} pbev_box_cart;

typedef struct pbev_box_polar {
  double theta, r, z;     /* center: azimuth, radius, height */
  double w, l, h;
  double yaw;             /* heading relative to the azimuth ray */
  double v_theta, v_r;    /* tangential and radial velocity */
  int32_t class_id;
} pbev_box_polar;

typedef struct pbev_density_band {
  double d_lo, d_hi;   /* band [d_lo, d_hi), meters */
  int64_t cells;       /* grid cells with center radius in the band */
  double clipped_area; /* annulus area intersected with grid coverage */
  double density;      /* cells / clipped_area, 0 when the band misses */
} pbev_density_band;

typedef struct pbev_equivariance_row {
  double delta;         /* applied rotation, radians */
  int32_t k_bins;       /* nearest whole-bin shift */
  int32_t on_lattice;   /* 1 when delta is a whole number of bins */
  int32_t degenerate;   /* 1 when the scene cannot distinguish shifts */
  double polar_residual;
  double cart_residual; /* best single-axis circular shift */
} pbev_equivariance_row;

typedef struct pbev_revolve_row {
  int32_t k_slots;
  int32_t n_view;
  double angle; /* radians */
  int32_t on_lattice;
  int32_t polar_shift_bins; /* exact shift when on-lattice, else best found */
  double polar_residual;
  double cart_residual;
} pbev_revolve_row;

#define PBEV_FUSION_IDENTITY 0
#define PBEV_FUSION_AVERAGE 1

typedef struct pbev_pipeline_options {
  int32_t frames;               /* leading trajectory poses to process, >= 1 */
  int32_t threads;              /* worker threads; result is independent of it */
  int32_t fusion;               /* PBEV_FUSION_* */
  int32_t history_capacity;     /* BEV history ring size, >= 1 */
  int32_t clamp_out_of_range;   /* 1: clamp radial warp samples, 0: zero fill */
  int32_t use_sae;              /* 1: apply the attention gate */
  double sae_logit;             /* constant attention logit */
  const char* index_cache_path; /* optional pooling-index sidecar, may be NULL */
} pbev_pipeline_options;

typedef struct pbev_frame_stats {
  int32_t frame;
  int64_t assigned_nodes;
  int64_t dropped_nodes;
  double raw_mass;   /* sum over the splatted map */
  double fused_mass; /* sum after fusion (and SAE when enabled) */
} pbev_frame_stats;

PBEV_API const char* pbev_version(void);
/* Message for the last failing call on this thread; empty string if none. */
PBEV_API const char* pbev_last_error(void);
PBEV_API void pbev_string_free(char* s);

/* Built-in defaults: 256x64 polar over [1, 65) and the equal-cell-count
 * 128x128 Cartesian grid over [-65, 65)^2. */
PBEV_API int pbev_default_polar_spec(pbev_polar_spec* out);
PBEV_API int pbev_default_cart_spec(pbev_cart_spec* out);

/* Box codec. */
PBEV_API int pbev_encode_polar(const pbev_box_cart* in, pbev_box_polar* out);
PBEV_API int pbev_decode_polar(const pbev_box_polar* in, pbev_box_cart* out);
PBEV_API int pbev_azimuth_rotate_cart(const pbev_box_cart* in, double delta, pbev_box_cart* out);

/* Camera rigs. JSON format: array of {"K": 16 numbers row-major, "T": 16,
 * "width", "height"}. */
PBEV_API int pbev_rig_default(pbev_rig** out);
PBEV_API int pbev_rig_from_json(const char* json_text, pbev_rig** out);
PBEV_API int pbev_rig_to_json(const pbev_rig* rig, char** json_out);
PBEV_API int pbev_rig_camera_count(const pbev_rig* rig);
PBEV_API int pbev_rig_revolve(const pbev_rig* rig, int32_t k_slots, pbev_rig** out);
PBEV_API void pbev_rig_free(pbev_rig* rig);

/* Scenes. */
PBEV_API int pbev_scene_default(uint64_t seed, int32_t n_objects, pbev_scene** out);
PBEV_API int pbev_scene_from_json(const char* json_text, pbev_scene** out);
PBEV_API int pbev_scene_to_json(const pbev_scene* scene, char** json_out);
PBEV_API int pbev_scene_set_seed(pbev_scene* scene, uint64_t seed);
PBEV_API void pbev_scene_free(pbev_scene* scene);

/* Grid density. edges holds n_bands + 1 increasing boundaries; bands_out
 * receives n_bands entries. */
PBEV_API int pbev_grid_density_polar(const pbev_polar_spec* spec, const double* edges, int32_t n_edges,
                                     pbev_density_band* bands_out);
PBEV_API int pbev_grid_density_cart(const pbev_cart_spec* spec, const double* edges, int32_t n_edges,
                                    pbev_density_band* bands_out);

/* Full pipeline. options may be NULL for defaults (one frame, one thread,
 * averaging fusion, no SAE, history of 8, zero fill). */
PBEV_API int pbev_pipeline_run(const pbev_scene* scene, const pbev_polar_spec* spec,
                               const pbev_pipeline_options* options, pbev_result** out);
/* Maps returned by the accessors are views owned by the result. */
PBEV_API int pbev_result_bev(const pbev_result* result, const pbev_map** out);
PBEV_API int pbev_result_heatmap(const pbev_result* result, const pbev_map** out);
PBEV_API int pbev_result_targets_jsonl(const pbev_result* result, char** jsonl_out);
PBEV_API int pbev_result_frame_count(const pbev_result* result);
PBEV_API int pbev_result_frame_stats(const pbev_result* result, int32_t frame, pbev_frame_stats* out);
PBEV_API int pbev_result_unencodable(const pbev_result* result);
PBEV_API void pbev_result_free(pbev_result* result);

/* Dense map access: row-major (channels, rows, cols) doubles. */
PBEV_API int pbev_map_shape(const pbev_map* map, int32_t* channels, int32_t* rows, int32_t* cols);
PBEV_API const double* pbev_map_data(const pbev_map* map);

/* Structural reports. */
PBEV_API int pbev_equivariance_report(const pbev_scene* scene, const pbev_polar_spec* polar,
                                      const pbev_cart_spec* cart, double delta, int32_t threads,
                                      pbev_equivariance_row* out);
PBEV_API int pbev_revolve_report(const pbev_scene* scene, const pbev_polar_spec* polar,
                                 const pbev_cart_spec* cart, int32_t k_slots, int32_t threads,
                                 pbev_revolve_row* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* POLARBEV_H */
