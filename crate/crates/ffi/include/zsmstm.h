#ifndef ZSMSTM_H
#define ZSMSTM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ZsmStatus {
  ZSM_STATUS_OK = 0,
  ZSM_STATUS_NULL_ARGUMENT = 1,
  ZSM_STATUS_INVALID_UTF8 = 2,
  ZSM_STATUS_CONFIG = 3,
  ZSM_STATUS_DATA = 4,
  ZSM_STATUS_NUMERIC = 5,
  ZSM_STATUS_BUFFER_TOO_SMALL = 6,
  ZSM_STATUS_PANIC = 7,
} ZsmStatus;

/**
 * A loaded checkpoint.
 */
typedef struct ZsmCheckpoint ZsmCheckpoint;

/**
 * A generated pose sequence, row-major `frames × (2·joints)`.
 */
typedef struct ZsmPose ZsmPose;

/**
 * One word-aligned interval (raw data units).
 */
typedef struct ZsmSample ZsmSample;

/**
 * A style embedding.
 */
typedef struct ZsmStyle ZsmStyle;

/**
 * Expressivity metrics of one sequence.
 */
typedef struct ZsmMetrics {
  double velocity;
  double acceleration;
  double jerk;
  double wrist_velocity;
  double wrist_acceleration;
  double wrist_jerk;
  double bbox_perimeter;
} ZsmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *zsm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *zsm_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZsmStatus zsm_checkpoint_load(const char *path, struct ZsmCheckpoint **out);

/**
 * # Safety
 * `ckpt` must come from `zsm_checkpoint_load` and not be used afterwards.
 */
void zsm_checkpoint_free(struct ZsmCheckpoint *ckpt);

/**
 * Joints, frames and style width of the checkpoint's model.
 *
 * # Safety
 * `ckpt` must be a live handle; any of the outputs may be null.
 */
enum ZsmStatus zsm_checkpoint_shape(const struct ZsmCheckpoint *ckpt,
                                    size_t *joints,
                                    size_t *frames,
                                    size_t *style_dim);

/**
 * Reads a binary or CSV interval file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZsmStatus zsm_sample_load(const char *path, struct ZsmSample **out);

/**
 * # Safety
 * `sample` must come from `zsm_sample_load` and not be used afterwards.
 */
void zsm_sample_free(struct ZsmSample *sample);

/**
 * Mean style embedding over `count` samples. The checkpoint is not modified.
 *
 * # Safety
 * `samples` must point to `count` live sample handles; `out` must be valid.
 */
enum ZsmStatus zsm_extract_style(const struct ZsmCheckpoint *ckpt,
                                 const struct ZsmSample *const *samples,
                                 size_t count,
                                 struct ZsmStyle **out);

/**
 * Builds a style from `len` raw values (e.g. read from a style bank).
 *
 * # Safety
 * `values` must point to `len` doubles; `out` must be valid.
 */
enum ZsmStatus zsm_style_from_values(const double *values, size_t len, struct ZsmStyle **out);

/**
 * # Safety
 * `style` must be a live handle.
 */
size_t zsm_style_dim(const struct ZsmStyle *style);

/**
 * Copies the embedding into `buf` (`cap` doubles).
 *
 * # Safety
 * `style` must be a live handle and `buf` must hold `cap` doubles.
 */
enum ZsmStatus zsm_style_values(const struct ZsmStyle *style, double *buf, size_t cap);

/**
 * # Safety
 * `style` must be a live handle and not be used afterwards.
 */
void zsm_style_free(struct ZsmStyle *style);

/**
 * Generates `source`'s content in `style`, in data units.
 *
 * # Safety
 * All handles must be live; `out` must be valid.
 */
enum ZsmStatus zsm_transfer(const struct ZsmCheckpoint *ckpt,
                            const struct ZsmSample *source,
                            const struct ZsmStyle *style,
                            struct ZsmPose **out);

/**
 * # Safety
 * `pose` must be a live handle.
 */
size_t zsm_pose_frames(const struct ZsmPose *pose);

/**
 * Values per frame (`2·joints`).
 *
 * # Safety
 * `pose` must be a live handle.
 */
size_t zsm_pose_cols(const struct ZsmPose *pose);

/**
 * Row-major values, valid until the handle is freed.
 *
 * # Safety
 * `pose` must be a live handle.
 */
const double *zsm_pose_data(const struct ZsmPose *pose);

/**
 * # Safety
 * `pose` must be a live handle and not be used afterwards.
 */
void zsm_pose_free(struct ZsmPose *pose);

/**
 * Metrics of a row-major `frames × cols` pose; `wrists` lists `n_wrists` joint indices.
 *
 * # Safety
 * `values` must hold `frames·cols` doubles, `wrists` `n_wrists` indices; `out` must be valid.
 */
enum ZsmStatus zsm_metrics(const double *values,
                           size_t frames,
                           size_t cols,
                           double fps,
                           const size_t *wrists,
                           size_t n_wrists,
                           struct ZsmMetrics *out);

/**
 * Percent shares of `|source − target|` and `|model − target|`.
 *
 * # Safety
 * `source_pct` and `model_pct` must be valid pointers.
 */
enum ZsmStatus zsm_distance_split(double source,
                                  double target,
                                  double model,
                                  double *source_pct,
                                  double *model_pct);

/**
 * Maps one `2·n_joints` frame into 75 BODY25 values `(x, y, c)`.
 *
 * # Safety
 * `frame` must hold `2·n_joints` doubles, `joint_map` `n_joints` indices, `out` 75 doubles.
 */
enum ZsmStatus zsm_map_to_body25(const double *frame,
                                 const size_t *joint_map,
                                 size_t n_joints,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZSMSTM_H */
