#ifndef BISEG_H
#define BISEG_H

/* Generated by cbindgen from the biseg-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; aligned with the CLI exit codes where they overlap.
 */
typedef enum {
  BisegStatus_Ok = 0,
  BisegStatus_Internal = 1,
  BisegStatus_Config = 2,
  BisegStatus_Data = 3,
  BisegStatus_Numeric = 4,
  BisegStatus_Tolerance = 5,
  BisegStatus_InvalidArgument = 6,
} BisegStatus;

/**
 * Opaque: a point cloud with optional labels.
 */
typedef struct BisegCloud BisegCloud;

/**
 * Opaque: a loaded checkpoint (model plus its run config).
 */
typedef struct BisegModel BisegModel;

/**
 * Headline metric values.
 */
typedef struct {
  double m_cov;
  double m_wcov;
  double m_prec;
  double m_rec;
  double m_acc;
  double m_iou;
  double o_acc;
} BisegMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *biseg_version(void);

/**
 * Message of the last failure on this thread. Valid until the next failing
 * call on the same thread; never NULL.
 */
const char *biseg_last_error_message(void);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
BisegStatus biseg_model_load(const char *path, BisegModel **out);

/**
 * # Safety
 * `model` must come from [`biseg_model_load`] and not be freed twice.
 */
void biseg_model_free(BisegModel *model);

/**
 * Class count of a loaded model.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
BisegStatus biseg_model_num_classes(const BisegModel *model, uintptr_t *out);

/**
 * Load a cloud file (text or JSON by extension).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
BisegStatus biseg_cloud_load(const char *path, BisegCloud **out);

/**
 * Write a cloud file (text or JSON by extension).
 *
 * # Safety
 * `cloud` must be a live handle; `path` must be a NUL-terminated string.
 */
BisegStatus biseg_cloud_save(const BisegCloud *cloud, const char *path);

/**
 * # Safety
 * `cloud` must come from this library and not be freed twice.
 */
void biseg_cloud_free(BisegCloud *cloud);

/**
 * Point count; 0 for a NULL handle.
 *
 * # Safety
 * `cloud` must be a live handle or NULL.
 */
uintptr_t biseg_cloud_len(const BisegCloud *cloud);

/**
 * Copy positions as x,y,z triples into `buf`.
 *
 * # Safety
 * `buf` must hold at least `3 * biseg_cloud_len(cloud)` doubles; `len` is
 * the buffer length in doubles.
 */
BisegStatus biseg_cloud_positions(const BisegCloud *cloud, double *buf, uintptr_t len);

/**
 * Copy ground-truth labels into `sem`/`inst`. Fails with `Data` when the
 * cloud carries no labels.
 *
 * # Safety
 * `sem` and `inst` must each hold at least `biseg_cloud_len(cloud)` u32;
 * `len` is each buffer's length in elements.
 */
BisegStatus biseg_cloud_labels(const BisegCloud *cloud,
                               uint32_t *sem,
                               uint32_t *inst,
                               uintptr_t len);

/**
 * Run the full segmentation pipeline (blocks, forward, mean-shift, merge)
 * on a scene; writes per-point class and instance ids.
 *
 * # Safety
 * `out_sem` and `out_inst` must each hold at least
 * `biseg_cloud_len(cloud)` u32; `len` is each buffer's length in elements.
 */
BisegStatus biseg_segment(const BisegModel *model,
                          const BisegCloud *cloud,
                          uint32_t *out_sem,
                          uint32_t *out_inst,
                          uintptr_t len,
                          uintptr_t threads);

/**
 * Evaluate predictions against ground truth over one scene.
 *
 * # Safety
 * All four label arrays must hold `len` u32 values; `out` must be valid.
 */
BisegStatus biseg_metrics_evaluate(const uint32_t *gt_sem,
                                   const uint32_t *gt_inst,
                                   const uint32_t *pred_sem,
                                   const uint32_t *pred_inst,
                                   uintptr_t len,
                                   uintptr_t num_classes,
                                   double iou_threshold,
                                   BisegMetrics *out);

/**
 * Binarized similarity-row masks for one reference point over a whole
 * scene. `threshold < 0` selects the default `1 / N`. Mask bytes are 0/1.
 *
 * # Safety
 * `out_sem_mask` and `out_inst_mask` must each hold at least
 * `biseg_cloud_len(cloud)` bytes; `len` is each buffer's length in bytes.
 */
BisegStatus biseg_similarity_masks(const BisegModel *model,
                                   const BisegCloud *cloud,
                                   uintptr_t point_index,
                                   double threshold,
                                   uint8_t *out_sem_mask,
                                   uint8_t *out_inst_mask,
                                   uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BISEG_H */
