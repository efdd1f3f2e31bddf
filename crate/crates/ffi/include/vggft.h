#ifndef VGGFT_H
#define VGGFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VGGFT_ARCH_VGG16 16

#define VGGFT_ARCH_VGG19 19

#define VGGFT_TASK_BINARY 1

#define VGGFT_TASK_MULTICLASS 2

/**
 * Status codes returned by every entry point.
 */
typedef enum VggftStatus {
  VGGFT_STATUS_OK = 0,
  VGGFT_STATUS_NULL_POINTER = 1,
  VGGFT_STATUS_INVALID_ARGUMENT = 2,
  VGGFT_STATUS_DIMENSION = 3,
  VGGFT_STATUS_CONFIG = 4,
  VGGFT_STATUS_STATE = 5,
  VGGFT_STATUS_INPUT = 6,
  VGGFT_STATUS_WEIGHT = 7,
  VGGFT_STATUS_WEIGHT_FILE = 8,
  VGGFT_STATUS_DECODE = 9,
  VGGFT_STATUS_DIVERGENCE = 10,
  VGGFT_STATUS_IO = 11,
  VGGFT_STATUS_PANIC = 12,
} VggftStatus;

/**
 * Opaque model: graph plus weights.
 */
typedef struct VggftModel VggftModel;

/**
 * Aggregate scores: macro precision / recall / F-measure, accuracy as
 * trace over total.
 */
typedef struct VggftMetrics {
  double precision;
  double recall;
  double f_measure;
  double accuracy;
} VggftMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null if none. Valid until the next
 * failing call on the same thread.
 */
const char *vggft_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *vggft_version(void);

/**
 * Builds a model with the fine-tuning head and freshly initialised weights.
 * `arch` is 16 or 19, `task` 1 (binary) or 2 (multiclass). `tiny` selects the
 * width-reduced 64x64 graph. Convolutional layers start frozen.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VggftStatus vggft_model_new(uint32_t arch,
                                 uint32_t task,
                                 bool tiny,
                                 uint64_t seed,
                                 struct VggftModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`vggft_model_new`] not yet freed.
 */
void vggft_model_free(struct VggftModel *model);

/**
 * Replaces the weights with a full-model `.vggw` file matching the graph.
 *
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
enum VggftStatus vggft_model_load(struct VggftModel *model, const char *path);

/**
 * Writes the weights as a full-model `.vggw` file.
 *
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
enum VggftStatus vggft_model_save(const struct VggftModel *model, const char *path);

/**
 * Input geometry `(channels, height, width)` and class count.
 *
 * # Safety
 * `model` must be a live handle; `shape` must point to 3 writable `size_t`.
 */
enum VggftStatus vggft_model_shape(const struct VggftModel *model, size_t *shape, size_t *classes);

/**
 * Total and trainable parameter counts.
 *
 * # Safety
 * `model` must be a live handle; both outputs must be writable.
 */
enum VggftStatus vggft_model_param_count(const struct VggftModel *model,
                                         uint64_t *total,
                                         uint64_t *trainable);

/**
 * Inference-mode class probabilities for `batch` images in NCHW order:
 * softmax rows for multiclass, independent per-unit sigmoids for binary.
 * `input_len` must equal `batch * C * H * W`, `output_len` `batch * classes`.
 *
 * # Safety
 * `input` must be readable for `input_len` floats and `output` writable for
 * `output_len` floats.
 */
enum VggftStatus vggft_model_predict(const struct VggftModel *model,
                                     const float *input,
                                     size_t input_len,
                                     size_t batch,
                                     float *output,
                                     size_t output_len);

/**
 * Scores `n` predictions against ground truth over `k` classes.
 *
 * # Safety
 * `truth` and `predicted` must be readable for `n` values; `out` writable.
 */
enum VggftStatus vggft_metrics(const uint32_t *truth,
                               const uint32_t *predicted,
                               size_t n,
                               size_t k,
                               struct VggftMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VGGFT_H */
