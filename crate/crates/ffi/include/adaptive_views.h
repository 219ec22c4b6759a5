#ifndef ADAPTIVE_VIEWS_H
#define ADAPTIVE_VIEWS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AV_BACKEND_OS = 0,
  AV_BACKEND_SIM = 1,
} AvBackend;

typedef enum {
  AV_ROUTING_MODE_SINGLE = 0,
  AV_ROUTING_MODE_MULTI = 1,
} AvRoutingMode;

typedef enum {
  AV_STATUS_OK = 0,
  AV_STATUS_NULL_POINTER = 1,
  AV_STATUS_INVALID_ARGUMENT = 2,
  AV_STATUS_OUT_OF_BOUNDS = 3,
  AV_STATUS_STALE_UPDATE = 4,
  AV_STATUS_BACKEND_UNAVAILABLE = 5,
  AV_STATUS_RESOURCE_EXHAUSTED = 6,
  AV_STATUS_REMAP_FAILED = 7,
  AV_STATUS_IO = 8,
  AV_STATUS_PANIC = 9,
  AV_STATUS_INTERNAL = 10,
} AvStatus;

typedef enum {
  AV_DISTRIBUTION_UNIFORM = 0,
  AV_DISTRIBUTION_LINEAR = 1,
  AV_DISTRIBUTION_SINE = 2,
  AV_DISTRIBUTION_SPARSE = 3,
} AvDistribution;

/**
 * What happened to the candidate view built by a query.
 */
typedef enum {
  AV_CANDIDATE_NOT_CONSTRUCTED = 0,
  AV_CANDIDATE_DISCARDED_EMPTY = 1,
  AV_CANDIDATE_ABORTED = 2,
  AV_CANDIDATE_ACCEPTED = 3,
  AV_CANDIDATE_REPLACED_EXISTING = 4,
  AV_CANDIDATE_DISCARDED_SUBSET = 5,
  AV_CANDIDATE_DISCARDED_LARGER_THAN_FULL = 6,
  AV_CANDIDATE_DISCARDED_CAP_REACHED = 7,
} AvCandidate;

/**
 * Rows and statistics of one query.
 */
typedef struct AvQueryResult AvQueryResult;

/**
 * A column with its view index.
 */
typedef struct AvStore AvStore;

typedef struct {
  size_t num_pages;
  AvBackend backend;
  AvRoutingMode mode;
  size_t max_views;
  size_t discard_tolerance;
  size_t replace_tolerance;
  /**
   * Non-zero to apply remaps on a mapping worker thread.
   */
  uint8_t async_mapper;
} AvStoreOptions;

typedef struct {
  uint64_t row_id;
  uint64_t old_value;
  uint64_t new_value;
} AvUpdate;

typedef struct {
  uint64_t row_id;
  uint64_t value;
} AvRow;

typedef struct {
  size_t scanned_pages;
  size_t views_used;
  AvCandidate candidate;
  size_t candidate_pages;
  uint64_t remap_calls;
  uint64_t elapsed_ns;
} AvQueryStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Options with the library defaults for a column of `num_pages` pages.
 */
AvStoreOptions av_store_options_default(size_t num_pages);

/**
 * Creates a zero-filled store. `*out` receives the handle.
 */
AvStatus av_store_create(const AvStoreOptions *options, AvStore **out);

void av_store_free(AvStore *store);

AvStatus av_store_num_rows(const AvStore *store, uint64_t *out);

AvStatus av_store_num_views(const AvStore *store, size_t *out);

/**
 * Overwrites the whole column in row order. `len` must equal the row count.
 * Existing partial views are dropped.
 */
AvStatus av_store_fill(AvStore *store, const uint64_t *values, size_t len);

/**
 * Fills the column from a built-in distribution over `[lo, hi]`. Existing
 * partial views are dropped.
 */
AvStatus av_store_fill_distribution(AvStore *store,
                                    AvDistribution distribution,
                                    uint64_t lo,
                                    uint64_t hi,
                                    uint64_t seed);

AvStatus av_store_read(const AvStore *store, uint64_t row_id, uint64_t *out);

/**
 * Applies a batch of overwrites and realigns every partial view. Nothing is
 * written if any record's old value is stale.
 */
AvStatus av_store_apply_updates(AvStore *store, const AvUpdate *updates, size_t len);

/**
 * Answers `[lower, upper]` and maintains the partial views.
 */
AvStatus av_store_query(AvStore *store, uint64_t lower, uint64_t upper, AvQueryResult **out);

/**
 * Answers `[lower, upper]` with a full scan, leaving the views alone.
 */
AvStatus av_store_query_full_scan(const AvStore *store,
                                  uint64_t lower,
                                  uint64_t upper,
                                  AvQueryResult **out);

/**
 * Number of rows in a result; 0 for a null handle.
 */
size_t av_result_len(const AvQueryResult *result);

/**
 * Pointer to the result's rows, valid until the result is freed.
 */
const AvRow *av_result_rows(const AvQueryResult *result);

AvStatus av_result_stats(const AvQueryResult *result, AvQueryStats *out);

void av_result_free(AvQueryResult *result);

/**
 * Message of the calling thread's last failure, or null. Valid until the
 * next failing call on the same thread.
 */
const char *av_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *av_status_name(AvStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_VIEWS_H */
