#ifndef FPLIVENESS_H
#define FPLIVENESS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FplStatus {
  FPL_STATUS_OK = 0,
  FPL_STATUS_NULL_ARGUMENT = 1,
  FPL_STATUS_INPUT = 2,
  FPL_STATUS_INVALID_ARGUMENT = 3,
  FPL_STATUS_MODEL = 4,
  FPL_STATUS_DATA = 5,
  FPL_STATUS_IO = 6,
  FPL_STATUS_PANIC = 7,
} FplStatus;

/**
 * Opaque grayscale image.
 */
typedef struct FplImage FplImage;

/**
 * Opaque trained patch classifier.
 */
typedef struct FplModel FplModel;

typedef struct FplPatchParams {
  size_t sigma;
  size_t patch_multiplier;
  size_t padding_multiplier;
  double noise_factor;
  uint8_t fill;
} FplPatchParams;

/**
 * 0 = live, 1 = spoof.
 */
typedef struct FplResult {
  uint32_t decision;
  double aggregate_live;
  double aggregate_spoof;
  size_t patch_count;
} FplResult;

/**
 * Confusion counts, live being the positive class.
 *
 */
typedef struct FplCounts {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn;
} FplCounts;

/**
 * Percentages; a rate with a zero denominator is NaN.
 */
typedef struct FplRates {
  double far;
  double frr;
  double ace;
  double accuracy;
} FplRates;

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *fpl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fpl_version(void);

struct FplPatchParams fpl_patch_params_default(void);

/**
 * Decodes a PNG or PGM file into a new image handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FplStatus fpl_image_load(const char *path, struct FplImage **out);

/**
 * Copies `width * height` row-major bytes into a new image handle.
 *
 * # Safety
 * `data` must point to at least `width * height` readable bytes.
 */
enum FplStatus fpl_image_from_gray(size_t width,
                                   size_t height,
                                   const uint8_t *data,
                                   struct FplImage **out);

/**
 * # Safety
 * `image` must be null or a handle from this library not yet freed.
 */
void fpl_image_free(struct FplImage *image);

/**
 * Width in pixels, 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t fpl_image_width(const struct FplImage *image);

/**
 * Height in pixels, 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t fpl_image_height(const struct FplImage *image);

/**
 * Number of patches dense sampling keeps for `image`.
 *
 * # Safety
 * All pointers must be valid; `image` must be a live handle.
 */
enum FplStatus fpl_dense_sample_count(const struct FplImage *image,
                                      const struct FplPatchParams *params,
                                      size_t *out_count);

/**
 * Loads a model file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FplStatus fpl_model_load(const char *path, struct FplModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void fpl_model_free(struct FplModel *model);

/**
 * Side of the square patches the model accepts, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t fpl_model_input_side(const struct FplModel *model);

/**
 * Samples, scores and aggregates one fingerprint. An image without kept
 * patches fails with the data status.
 *
 * # Safety
 * All pointers must be valid; handles must be live.
 */
enum FplStatus fpl_classify(const struct FplModel *model,
                            const struct FplImage *image,
                            const struct FplPatchParams *params,
                            struct FplResult *out);

/**
 * FAR, FRR, ACE and accuracy for a confusion matrix.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum FplStatus fpl_metrics(const struct FplCounts *counts, struct FplRates *out);

#endif  /* FPLIVENESS_H */
