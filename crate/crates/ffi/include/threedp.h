#ifndef THREEDP_H
#define THREEDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum ThreedpStatus {
  THREEDP_STATUS_OK = 0,
  THREEDP_STATUS_NULL_POINTER = 1,
  THREEDP_STATUS_INVALID_INPUT = 2,
  THREEDP_STATUS_INFERENCE_FAILURE = 3,
  THREEDP_STATUS_OUT_OF_RANGE = 4,
  THREEDP_STATUS_PANIC = 5,
} ThreedpStatus;

/**
 * Inference and existence settings.
 */
typedef struct ThreedpConfig ThreedpConfig;

/**
 * A depth image, row-major, in centimeters.
 */
typedef struct ThreedpDepth ThreedpDepth;

/**
 * A hidden-object scene.
 */
typedef struct ThreedpHiddenScene ThreedpHiddenScene;

/**
 * Output of pose and structure inference.
 */
typedef struct ThreedpResult ThreedpResult;

/**
 * A scene directory loaded from disk.
 */
typedef struct ThreedpScene ThreedpScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * call that fails.
 */
const char *threedp_last_error(void);

/**
 * Library version as a static string.
 */
const char *threedp_version(void);

/**
 * # Safety
 * `dir` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ThreedpStatus threedp_scene_load(const char *dir, struct ThreedpScene **out_scene);

/**
 * Number of objects to infer (the table excluded).
 *
 * # Safety
 * `scene` must come from [`threedp_scene_load`].
 */
enum ThreedpStatus threedp_scene_num_objects(const struct ThreedpScene *scene, size_t *out_n);

/**
 * # Safety
 * `scene` must come from [`threedp_scene_load`] or be null.
 */
void threedp_scene_free(struct ThreedpScene *scene);

/**
 * Default settings.
 *
 * # Safety
 * `out_config` must be a valid pointer.
 */
enum ThreedpStatus threedp_config_default(struct ThreedpConfig **out_config);

/**
 * Settings from a JSON document; missing fields keep their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_config` a valid pointer.
 */
enum ThreedpStatus threedp_config_from_json(const char *json, struct ThreedpConfig **out_config);

/**
 * # Safety
 * `config` must come from a `threedp_config_*` constructor.
 */
enum ThreedpStatus threedp_config_set_seed(struct ThreedpConfig *config, uint64_t seed);

/**
 * Sets the sweep count of both the pose chain and the existence chain.
 *
 * # Safety
 * `config` must come from a `threedp_config_*` constructor.
 */
enum ThreedpStatus threedp_config_set_sweeps(struct ThreedpConfig *config, size_t sweeps);

/**
 * # Safety
 * `config` must come from a `threedp_config_*` constructor or be null.
 */
void threedp_config_free(struct ThreedpConfig *config);

/**
 * Runs pose and structure inference. A nonzero `ablate_structure`
 * disables structure moves.
 *
 * # Safety
 * Handles must be live; `out_result` a valid pointer.
 */
enum ThreedpStatus threedp_infer(const struct ThreedpScene *scene,
                                 const struct ThreedpConfig *config,
                                 int ablate_structure,
                                 struct ThreedpResult **out_result);

/**
 * # Safety
 * `result` must come from [`threedp_infer`].
 */
enum ThreedpStatus threedp_result_num_samples(const struct ThreedpResult *result, size_t *out_n);

/**
 * World pose of object `index` (0 is the table) in the best state:
 * translation `[x, y, z]` and unit quaternion `[w, x, y, z]`.
 *
 * # Safety
 * `out_t` must hold 3 doubles and `out_q` 4.
 */
enum ThreedpStatus threedp_result_best_pose(const struct ThreedpResult *result,
                                            size_t index,
                                            double *out_t,
                                            double *out_q);

/**
 * Parent of object `index` in the best state: -1 for the world, else the
 * index of the supporting object.
 *
 * # Safety
 * `result` must come from [`threedp_infer`].
 */
enum ThreedpStatus threedp_result_best_parent(const struct ThreedpResult *result,
                                              size_t index,
                                              int64_t *out_parent);

/**
 * Writes the samples file the CLI `infer` command would write.
 *
 * # Safety
 * `result` must come from [`threedp_infer`]; `file` a NUL-terminated path.
 */
enum ThreedpStatus threedp_result_write_samples(const struct ThreedpResult *result,
                                                const char *file);

/**
 * # Safety
 * `result` must come from [`threedp_infer`] or be null.
 */
void threedp_result_free(struct ThreedpResult *result);

/**
 * # Safety
 * `dir` must be a NUL-terminated string; `out_scene` a valid pointer.
 */
enum ThreedpStatus threedp_hidden_load(const char *dir, struct ThreedpHiddenScene **out_scene);

/**
 * # Safety
 * `scene` must come from [`threedp_hidden_load`] or be null.
 */
void threedp_hidden_free(struct ThreedpHiddenScene *scene);

/**
 * Posterior presence probability of each candidate. Writes up to
 * `capacity` values and stores the candidate count in `out_len`.
 *
 * # Safety
 * `out_presence` must hold `capacity` doubles (may be null when 0).
 */
enum ThreedpStatus threedp_infer_existence(const struct ThreedpHiddenScene *scene,
                                           const struct ThreedpConfig *config,
                                           double *out_presence,
                                           size_t capacity,
                                           size_t *out_len);

/**
 * Loads a DPT1 depth image.
 *
 * # Safety
 * `file` must be a NUL-terminated path; `out_depth` a valid pointer.
 */
enum ThreedpStatus threedp_depth_load(const char *file, struct ThreedpDepth **out_depth);

/**
 * Renders the ground truth of a `scene.json`.
 *
 * # Safety
 * `file` must be a NUL-terminated path; `out_depth` a valid pointer.
 */
enum ThreedpStatus threedp_render_scene_file(const char *file, struct ThreedpDepth **out_depth);

/**
 * Image size and the depth at pixel `(u, v)`.
 *
 * # Safety
 * `depth` must be live; out-pointers valid.
 */
enum ThreedpStatus threedp_depth_size(const struct ThreedpDepth *depth,
                                      size_t *out_width,
                                      size_t *out_height);

/**
 * # Safety
 * `depth` must be live; `out_value` valid.
 */
enum ThreedpStatus threedp_depth_get(const struct ThreedpDepth *depth,
                                     size_t u,
                                     size_t v,
                                     double *out_value);

/**
 * # Safety
 * `depth` must come from a depth constructor or be null.
 */
void threedp_depth_free(struct ThreedpDepth *depth);

/**
 * Contact coordinates `[a, b, z, eta_x, eta_y, eta_z, phi]` of a relative
 * pose given as translation `[x, y, z]` and quaternion `[w, x, y, z]`.
 *
 * # Safety
 * `t` must hold 3 doubles, `q` 4 and `out_coords` 7.
 */
enum ThreedpStatus threedp_xi(const double *t, const double *q, double *out_coords);

/**
 * Inverse of [`threedp_xi`].
 *
 * # Safety
 * `coords` must hold 7 doubles, `out_t` 3 and `out_q` 4.
 */
enum ThreedpStatus threedp_xi_inv(const double *coords, double *out_t, double *out_q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THREEDP_H */
