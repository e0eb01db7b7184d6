#ifndef CLIC_H
#define CLIC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Heuristic metric selector.
 */
typedef enum ClicMetric {
  /**
   * Global entropy, normalized to [0, 1].
   */
  CLIC_METRIC_GLOBAL_ENTROPY = 0,
  /**
   * Canny edge density with default thresholds.
   */
  CLIC_METRIC_EDGE_DENSITY = 1,
  /**
   * Inverted compression ratio, normalized to [0, 1].
   */
  CLIC_METRIC_COMPRESSION_RATIO = 2,
} ClicMetric;

/**
 * Result of every fallible call.
 */
typedef enum ClicStatus {
  CLIC_STATUS_OK = 0,
  CLIC_STATUS_NULL_POINTER = 1,
  CLIC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Bad or unreadable input data.
   */
  CLIC_STATUS_DATA = 3,
  /**
   * NaN, divergence or a degenerate series.
   */
  CLIC_STATUS_NUMERIC = 4,
  CLIC_STATUS_IO = 5,
  /**
   * Output buffer too small; the needed length is still reported.
   */
  CLIC_STATUS_BUFFER_TOO_SMALL = 6,
  CLIC_STATUS_INTERNAL = 7,
} ClicStatus;

/**
 * Frozen encoder, optionally with a fitted regression head.
 */
typedef struct ClicEncoder ClicEncoder;

/**
 * Decoded image.
 */
typedef struct ClicImage ClicImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *clic_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns its full length in bytes,
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t clic_last_error(char *buf, size_t len);

/**
 * Grayscale (`channels` = 1) or RGB (`channels` = 3) image from row-major
 * samples.
 *
 * # Safety
 * `samples` must be valid for `width * height * channels` bytes and `out`
 * must be a valid pointer.
 */
enum ClicStatus clic_image_new(size_t width,
                               size_t height,
                               size_t channels,
                               const uint8_t *samples,
                               struct ClicImage **out);

/**
 * Decodes a PNG or PNM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ClicStatus clic_image_load(const char *path, struct ClicImage **out);

/**
 * Releases an image; null is ignored.
 *
 * # Safety
 * `img` must come from this library and not be used afterwards.
 */
void clic_image_free(struct ClicImage *img);

/**
 * Width and height of an image.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClicStatus clic_image_size(const struct ClicImage *img, size_t *width, size_t *height);

/**
 * Heuristic complexity score of `img`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClicStatus clic_metric(const struct ClicImage *img, enum ClicMetric metric, double *out);

/**
 * Randomly initialized encoder with the default architecture.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ClicStatus clic_encoder_new(uint64_t seed, struct ClicEncoder **out);

/**
 * Query encoder (and head, when attached) of a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ClicStatus clic_encoder_load(const char *path, struct ClicEncoder **out);

/**
 * Releases an encoder; null is ignored.
 *
 * # Safety
 * `enc` must come from this library and not be used afterwards.
 */
void clic_encoder_free(struct ClicEncoder *enc);

/**
 * Length of the pooled feature vector.
 *
 * # Safety
 * `enc` must be a valid handle.
 */
size_t clic_encoder_feature_dim(const struct ClicEncoder *enc);

/**
 * Complexity score: the head's prediction when a head is attached, else
 * the aggregated activation energy.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClicStatus clic_encoder_score(const struct ClicEncoder *enc,
                                   const struct ClicImage *img,
                                   double *out);

/**
 * Writes the pooled features of `img` into `buf` and their count into
 * `written`. Returns `BufferTooSmall` (with `written` set) when `len` is
 * short.
 *
 * # Safety
 * `buf` must be valid for `len` floats; other pointers must be valid.
 */
enum ClicStatus clic_encoder_features(const struct ClicEncoder *enc,
                                      const struct ClicImage *img,
                                      float *buf,
                                      size_t len,
                                      size_t *written);

/**
 * Pearson and Spearman correlation of two series of length `n`.
 *
 * # Safety
 * `x` and `y` must be valid for `n` doubles; outputs must be valid.
 */
enum ClicStatus clic_correlation(const double *x,
                                 const double *y,
                                 size_t n,
                                 double *pcc,
                                 double *srcc);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CLIC_H */
