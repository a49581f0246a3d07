#ifndef REDE_H
#define REDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Outcome of a call.
 */
typedef enum RedeStatus {
  REDE_STATUS_OK = 0,
  /*
   A required pointer was null.
   */
  REDE_STATUS_NULL_POINTER = 1,
  REDE_STATUS_INVALID_INPUT = 2,
  REDE_STATUS_INVALID_CONFIG = 3,
  /*
   Degenerate geometry, or no usable candidate pose.
   */
  REDE_STATUS_DEGENERATE = 4,
  /*
   A non-finite value was produced.
   */
  REDE_STATUS_NUMERICAL = 5,
  REDE_STATUS_IO = 6,
  /*
   Internal panic; the call had no effect.
   */
  REDE_STATUS_PANIC = 7,
} RedeStatus;

/*
 Robust estimator bound to one model, its keypoints and one scene.
 */
typedef struct RedeEstimator RedeEstimator;

/*
 A rigid transform: unit quaternion `[w, x, y, z]` and translation.
 */
typedef struct RedePose {
  double quat[4];
  double t[3];
} RedePose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *rede_version(void);

/*
 Copies the calling thread's last error message into `buf` (truncated and
 NUL-terminated when `len > 0`). Returns the full message length in bytes.

 # Safety
 `buf` must be null or valid for writing `len` bytes.
 */
size_t rede_last_error(char *buf, size_t len);

/*
 Builds an estimator. `lambda` is the residue softmax temperature in
 meters; `residue_points` caps the scene points used per residue (0 for
 the default).

 # Safety
 Each array must hold `3·count` doubles; `out` must be writable.
 */
enum RedeStatus rede_estimator_new(const double *model_keypoints,
                                   size_t num_keypoints,
                                   const double *scene,
                                   size_t num_scene,
                                   const double *model,
                                   size_t num_model,
                                   double lambda,
                                   size_t residue_points,
                                   struct RedeEstimator **out);

/*
 Number of candidate poses, `C(K, 3)`.

 # Safety
 `estimator` must come from [`rede_estimator_new`]; `out` must be writable.
 */
enum RedeStatus rede_estimator_num_candidates(const struct RedeEstimator *estimator, size_t *out);

/*
 Estimates the pose from `num_keypoints` predicted scene keypoints. When
 `weights` is not null it receives the candidate weights, in triple order,
 and `weights_len` must equal the candidate count.

 # Safety
 `scene_keypoints` must hold `3·num_keypoints` doubles, `weights` must be
 null or hold `weights_len` doubles, and `out` must be writable.
 */
enum RedeStatus rede_estimator_estimate(const struct RedeEstimator *estimator,
                                        const double *scene_keypoints,
                                        size_t num_keypoints,
                                        struct RedePose *out,
                                        double *weights,
                                        size_t weights_len);

/*
 Releases an estimator. Null is ignored.

 # Safety
 `estimator` must be null or come from [`rede_estimator_new`], and must
 not be used afterwards.
 */
void rede_estimator_free(struct RedeEstimator *estimator);

/*
 Least-squares rigid fit mapping `model` onto `scene`, `n ≥ 3` pairs.

 # Safety
 Both arrays must hold `3·n` doubles; `out` must be writable.
 */
enum RedeStatus rede_kabsch_solve(const double *model,
                                  const double *scene,
                                  size_t n,
                                  struct RedePose *out);

/*
 ADD (`symmetric == 0`) or ADD-S (`symmetric != 0`) over `n` model points.

 # Safety
 Poses must be readable, `model` must hold `3·n` doubles, `out` writable.
 */
enum RedeStatus rede_add(const struct RedePose *pred,
                         const struct RedePose *truth,
                         const double *model,
                         size_t n,
                         int32_t symmetric,
                         double *out);

/*
 Area under the accuracy-vs-threshold curve on `[0, max_threshold]`.

 # Safety
 `distances` must hold `n` doubles; `out` must be writable.
 */
enum RedeStatus rede_auc(const double *distances, size_t n, double max_threshold, double *out);

/*
 Point-to-point ICP from `init`. Writes the refined pose and, when
 `iterations` is not null, the number of accepted steps.

 # Safety
 Arrays must hold `3·count` doubles; `init` readable, `out` writable,
 `iterations` null or writable.
 */
enum RedeStatus rede_icp_refine(const struct RedePose *init,
                                const double *scene,
                                size_t num_scene,
                                const double *model,
                                size_t num_model,
                                size_t max_iters,
                                double tol,
                                struct RedePose *out,
                                size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDE_H */
