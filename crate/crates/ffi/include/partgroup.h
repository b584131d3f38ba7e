#ifndef PARTGROUP_H
#define PARTGROUP_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bottom-up algorithm for `pg_propose`.
 */
typedef enum PgAlgo {
  PG_ALGO_SELSEARCH = 0,
  PG_ALGO_FZS = 1,
  PG_ALGO_GRID = 2,
} PgAlgo;

/**
 * Interleaved `RGBRGB...` rows or three planes `RR..GG..BB..`.
 */
typedef enum PgLayout {
  PG_LAYOUT_INTERLEAVED = 0,
  PG_LAYOUT_PLANAR = 1,
} PgLayout;

/**
 * Status codes. Zero is success; the rest mirror the library's error
 * classes, followed by failures specific to this layer.
 */
typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_DIMENSION_MISMATCH = 1,
  PG_STATUS_EMPTY_INPUT = 2,
  PG_STATUS_INVALID_RLE = 3,
  PG_STATUS_INVALID_PARAMETER = 4,
  PG_STATUS_ZERO_NORM = 5,
  PG_STATUS_FEATURE_DIM = 6,
  PG_STATUS_ASYMMETRIC_AFFINITY = 7,
  PG_STATUS_DEGENERATE_BOX = 8,
  PG_STATUS_PYRAMID_HEADER = 9,
  PG_STATUS_PYRAMID_SHAPE = 10,
  PG_STATUS_UNSORTED_PREDICTIONS = 11,
  PG_STATUS_UNKNOWN_IMAGE_IDS = 12,
  PG_STATUS_MISSING_FILE = 13,
  PG_STATUS_IO = 14,
  PG_STATUS_JSON = 15,
  PG_STATUS_IMAGE = 16,
  PG_STATUS_SCHEMA = 17,
  PG_STATUS_CONFIG = 18,
  PG_STATUS_NULL_ARGUMENT = 100,
  PG_STATUS_INVALID_UTF8 = 101,
  PG_STATUS_BAD_BUFFER = 102,
  PG_STATUS_PANIC = 103,
} PgStatus;

/**
 * One image's proposal records, as in a proposals or grouped file.
 */
typedef struct PgProposals PgProposals;

typedef struct PgReport PgReport;

typedef struct PgProposeParams {
  enum PgAlgo algo;
  double k;
  double sigma;
  size_t min_size;
  uint32_t cell;
  uint64_t image_id;
} PgProposeParams;

typedef struct PgGroupParams {
  double delta;
  double tau;
  bool keep_originals;
} PgGroupParams;

typedef struct PgRankParams {
  size_t top_k;
  double dedup_iou;
} PgRankParams;

/**
 * Borrowed 8-bit RGB image of exactly `height * width * 3` bytes.
 */
typedef struct PgImage {
  const uint8_t *data;
  size_t len;
  uint32_t height;
  uint32_t width;
  enum PgLayout layout;
} PgImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version; static storage, do not free.
 */
const char *pg_version(void);

uint32_t pg_schema_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *pg_last_error_message(void);

struct PgProposeParams pg_propose_params_default(void);

struct PgGroupParams pg_group_params_default(void);

struct PgRankParams pg_rank_params_default(void);

/**
 * Proposals for one image. `file_name` may be null; it is recorded in the
 * output and names the tensor file when grouping with `tensor:DIR`.
 *
 * # Safety
 * Pointers must be null or valid for the described sizes.
 */
enum PgStatus pg_propose(const struct PgImage *image,
                         const struct PgProposeParams *params,
                         const char *file_name,
                         struct PgProposals **out);

/**
 * Parse one image entry of a proposals file.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum PgStatus pg_proposals_from_json(const char *json, struct PgProposals **out);

/**
 * Serialize to a string owned by the caller (`pg_string_free`).
 *
 * # Safety
 * `handle` must come from this library.
 */
enum PgStatus pg_proposals_to_json(const struct PgProposals *handle, char **out);

/**
 * # Safety
 * `handle` must come from this library.
 */
enum PgStatus pg_proposals_len(const struct PgProposals *handle, size_t *out);

/**
 * Group parts into objects. `features` is `handcrafted` (needs `image`) or
 * `tensor:PATH` (`image` may be null).
 *
 * # Safety
 * Pointers must be null or valid; `parts` must come from this library.
 */
enum PgStatus pg_group(const struct PgProposals *parts,
                       const struct PgImage *image,
                       const char *features,
                       const struct PgGroupParams *params,
                       struct PgProposals **out);

/**
 * Rank one image's proposals; writes a results document as JSON.
 *
 * # Safety
 * Pointers must be null or valid; `proposals` must come from this library.
 */
enum PgStatus pg_rank(const struct PgProposals *proposals,
                      const struct PgRankParams *params,
                      char **out_json);

/**
 * Average recall of a results file against a COCO file. `kind` is `box`,
 * `mask` or `both`.
 *
 * # Safety
 * Strings must be NUL-terminated; `ks` must hold `n_ks` values.
 */
enum PgStatus pg_evaluate(const char *gt_path,
                          const char *results_path,
                          const size_t *ks,
                          size_t n_ks,
                          const char *kind,
                          struct PgReport **out);

/**
 * AR@k for `kind` (`box` or `mask`) from a report.
 *
 * # Safety
 * `report` must come from this library; `kind` must be NUL-terminated.
 */
enum PgStatus pg_report_ar(const struct PgReport *report, const char *kind, size_t k, double *out);

/**
 * The report in the same JSON layout `eval` writes.
 *
 * # Safety
 * `report` must come from this library.
 */
enum PgStatus pg_report_to_json(const struct PgReport *report, char **out);

/**
 * # Safety
 * `handle` must be null or come from this library, and is freed once.
 */
void pg_proposals_free(struct PgProposals *handle);

/**
 * # Safety
 * `report` must be null or come from this library, and is freed once.
 */
void pg_report_free(struct PgReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void pg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARTGROUP_H */
