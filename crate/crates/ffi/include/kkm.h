#ifndef KKM_H
#define KKM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KkmStatus {
  KKM_STATUS_OK = 0,
  KKM_STATUS_NULL_POINTER = 1,
  KKM_STATUS_INPUT = 2,
  KKM_STATUS_FORMAT = 3,
  KKM_STATUS_CAPACITY = 4,
  KKM_STATUS_STATE = 5,
  KKM_STATUS_IO = 6,
  KKM_STATUS_BUFFER_TOO_SMALL = 7,
  KKM_STATUS_PANIC = 8,
} KkmStatus;

typedef enum KkmKernel {
  KKM_KERNEL_RBF = 0,
  KKM_KERNEL_LINEAR = 1,
} KkmKernel;

typedef enum KkmSampling {
  KKM_SAMPLING_STRIDE = 0,
  KKM_SAMPLING_BLOCK = 1,
} KkmSampling;

/**
 * Run parameters. `sigma <= 0` with the rbf kernel means "auto".
 */
typedef struct KkmConfig KkmConfig;

/**
 * Samples and optional class labels.
 */
typedef struct KkmDataset KkmDataset;

/**
 * Labels, medoids and cost of a finished run.
 */
typedef struct KkmResult KkmResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *kkm_last_error_message(void);

/**
 * Copies `n × d` row-major samples (and `n` labels when `labels` is not NULL).
 *
 * # Safety
 * `values` must point to `n * d` doubles, `labels` to `n` integers or be NULL,
 * and `out` must be writable.
 */
enum KkmStatus kkm_dataset_new(size_t n,
                               size_t d,
                               const double *values,
                               const uint32_t *labels,
                               struct KkmDataset **out);

/**
 * Loads a numeric CSV; with `has_labels != 0` the last column is the class.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum KkmStatus kkm_dataset_load_csv(const char *path, int32_t has_labels, struct KkmDataset **out);

/**
 * Loads IDX images and, when `labels` is not NULL, IDX labels.
 *
 * # Safety
 * `images` (and `labels` if given) must be NUL-terminated strings; `out` writable.
 */
enum KkmStatus kkm_dataset_load_idx(const char *images,
                                    const char *labels,
                                    struct KkmDataset **out);

/**
 * # Safety
 * `ds` must be NULL or a pointer returned by a dataset constructor.
 */
size_t kkm_dataset_len(const struct KkmDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or a pointer returned by a dataset constructor.
 */
size_t kkm_dataset_dim(const struct KkmDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or a pointer returned by a dataset constructor, freed once.
 */
void kkm_dataset_free(struct KkmDataset *ds);

/**
 * Defaults: one batch, `s = 1`, one worker, rbf with auto sigma (4 × diameter),
 * stride sampling, seed 0, one restart, 300 iterations.
 */
struct KkmConfig *kkm_config_new(size_t clusters, size_t batches);

/**
 * # Safety
 * `cfg` must be NULL or a pointer from [`kkm_config_new`], freed once.
 */
void kkm_config_free(struct KkmConfig *cfg);

/**
 * Clusters `ds` with `cfg`.
 *
 * # Safety
 * `ds` and `cfg` must be live handles; `out` must be writable.
 */
enum KkmStatus kkm_run(const struct KkmDataset *ds,
                       const struct KkmConfig *cfg,
                       struct KkmResult **out);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t kkm_result_len(const struct KkmResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t kkm_result_clusters(const struct KkmResult *res);

/**
 * Copies the labels into `buf` (capacity `len`).
 *
 * # Safety
 * `res` must be a live result handle; `buf` must hold `len` integers.
 */
enum KkmStatus kkm_result_labels(const struct KkmResult *res, uint32_t *buf, size_t len);

/**
 * Copies medoid sample indices into `buf` (capacity `len`); absent medoids are `-1`.
 *
 * # Safety
 * `res` must be a live result handle; `buf` must hold `len` integers.
 */
enum KkmStatus kkm_result_medoids(const struct KkmResult *res, int64_t *buf, size_t len);

/**
 * Global cost of the kept restart, or NaN for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
double kkm_result_cost(const struct KkmResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle, freed once.
 */
void kkm_result_free(struct KkmResult *res);

/**
 * Smallest batch count whose per-worker footprint fits `memory_bytes`.
 *
 * # Safety
 * `out_batches` must be writable.
 */
enum KkmStatus kkm_plan_min_batches(uint64_t samples,
                                    uint64_t clusters,
                                    uint64_t workers,
                                    uint64_t scalar_bytes,
                                    uint64_t memory_bytes,
                                    uint64_t *out_batches);

/**
 * Majority-vote clustering accuracy.
 *
 * # Safety
 * `truth` and `pred` must hold `n` integers; `out` must be writable.
 */
enum KkmStatus kkm_accuracy(const uint32_t *truth, const uint32_t *pred, size_t n, double *out);

/**
 * Normalized mutual information.
 *
 * # Safety
 * `truth` and `pred` must hold `n` integers; `out` must be writable.
 */
enum KkmStatus kkm_nmi(const uint32_t *truth, const uint32_t *pred, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KKM_H */
