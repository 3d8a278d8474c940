#ifndef AIMEVAL_H
#define AIMEVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum AimStatus {
  AIM_STATUS_OK = 0,
  AIM_STATUS_NULL_POINTER = 1,
  AIM_STATUS_INVALID_ARGUMENT = 2,
  AIM_STATUS_SHAPE_MISMATCH = 3,
  AIM_STATUS_PARSE = 4,
  AIM_STATUS_NOT_FOUND = 5,
  AIM_STATUS_DEGENERATE = 6,
  AIM_STATUS_NUMERICAL = 7,
  AIM_STATUS_INTERNAL = 8,
} AimStatus;

/**
 * Opaque handle to a loaded classifier.
 */
typedef struct AimModel AimModel;

/**
 * Faithfulness areas of one degradation curve.
 */
typedef struct AimAreaMetrics {
  double aoc;
  double abc;
  double auc;
} AimAreaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *aim_last_error_message(void);

/**
 * Parses a model document. On success `*out` owns a handle to release with
 * [`aim_model_free`].
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum AimStatus aim_model_load_json(const char *json, struct AimModel **out);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum AimStatus aim_model_load_file(const char *path, struct AimModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from a load call and not be used afterwards.
 */
void aim_model_free(struct AimModel *model);

/**
 * Number of input values and of classes.
 *
 * # Safety
 * `model` must be a live handle; the outputs must be writable.
 */
enum AimStatus aim_model_dims(const struct AimModel *model, size_t *input_len, size_t *num_classes);

/**
 * Logits of one flattened input.
 *
 * # Safety
 * `x` must hold `x_len` values and `logits` room for `logits_len`.
 */
enum AimStatus aim_model_forward(const struct AimModel *model,
                                 const double *x,
                                 size_t x_len,
                                 double *logits,
                                 size_t logits_len);

/**
 * Gradient of the cross-entropy loss of `label` with respect to the input.
 *
 * # Safety
 * `x` and `grad` must each hold `len` values.
 */
enum AimStatus aim_model_input_gradient(const struct AimModel *model,
                                        const double *x,
                                        size_t len,
                                        size_t label,
                                        double *grad);

/**
 * Saliency map of `method` (`GD`, `GI`, `SG`, `SS`, `VG`, `IG`, `RANDOM`,
 * or an absolute variant such as `IGA`) for `label`, with library defaults.
 *
 * # Safety
 * `method` must be nul-terminated; `x` and `out` must each hold `len` values.
 */
enum AimStatus aim_attribute(const struct AimModel *model,
                             const char *method,
                             const double *x,
                             size_t len,
                             size_t label,
                             uint64_t seed,
                             double *out);

/**
 * AOC, ABC and AUC of a curve sampled at `n` ratios.
 *
 * # Safety
 * `ratios`, `acc_morf` and `acc_lerf` must each hold `n` values.
 */
enum AimStatus aim_area_metrics(const double *ratios,
                                const double *acc_morf,
                                const double *acc_lerf,
                                size_t n,
                                double acc0,
                                double acc_full,
                                struct AimAreaMetrics *out);

/**
 * Spearman rank correlation with average ranks for ties. `*degenerate` is
 * set to 1 when either side is constant (ρ is then 0).
 *
 * # Safety
 * `a` and `b` must each hold `n` values; outputs must be writable.
 */
enum AimStatus aim_spearman(const double *a,
                            const double *b,
                            size_t n,
                            double *rho,
                            int32_t *degenerate);

/**
 * Library version, static storage.
 */
const char *aim_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIMEVAL_H */
