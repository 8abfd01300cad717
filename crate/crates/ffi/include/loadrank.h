#ifndef LOADRANK_H
#define LOADRANK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LrMapping {
  LR_MAPPING_DETAILED = 0,
  LR_MAPPING_COARSE = 1,
} LrMapping;

typedef enum LrMethod {
  LR_METHOD_PCA_ABS = 0,
  LR_METHOD_PCA_SQUARE = 1,
  LR_METHOD_FACTOR_PRIORITY = 2,
} LrMethod;

typedef enum LrStatus {
  LR_STATUS_OK = 0,
  LR_STATUS_NULL_POINTER = 1,
  LR_STATUS_INVALID_UTF8 = 2,
  LR_STATUS_IO = 3,
  LR_STATUS_PARSE = 4,
  LR_STATUS_INVALID_ARGUMENT = 5,
  LR_STATUS_DEGENERATE_DATA = 6,
  LR_STATUS_NUMERICAL_FAILURE = 7,
  LR_STATUS_NOT_APPLICABLE = 8,
  LR_STATUS_EMPTY_SELECTION = 9,
  LR_STATUS_BUFFER_TOO_SMALL = 10,
  LR_STATUS_INDEX_OUT_OF_RANGE = 11,
  LR_STATUS_PANIC = 12,
} LrStatus;

/**
 * Opaque labelled feature matrix.
 */
typedef struct LrDataset LrDataset;

/**
 * Opaque feature ranking.
 */
typedef struct LrRanking LrRanking;

/**
 * Ranking parameters; obtain defaults from [`lr_rank_options_default`].
 */
typedef struct LrRankOptions {
  /**
   * Chi-square prefilter significance level.
   */
  double alpha;
  /**
   * Quantile bins used by the prefilter.
   */
  size_t n_bins;
  /**
   * Cumulative explained-variance target for component retention.
   */
  double variance_threshold;
  /**
   * Minimum absolute rotated loading for a factor assignment.
   */
  double loading_threshold;
} LrRankOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lr_version(void);

/**
 * Copies the calling thread's last error message into `buf`. Returns
 * `LR_STATUS_OK` with an empty string when no error is recorded.
 *
 * # Safety
 * `buf` must be valid for `capacity` bytes; `written` may be null.
 */
enum LrStatus lr_last_error_message(char *buf, size_t capacity, size_t *written);

/**
 * Loads a delimited file whose `target` column holds rating strings.
 * Rows with missing cells are dropped.
 *
 * # Safety
 * `path` and `target` must be NUL-terminated strings; `out` must be valid
 * for writes.
 */
enum LrStatus lr_dataset_load_csv(const char *path,
                                  const char *target,
                                  char delimiter,
                                  enum LrMapping mapping,
                                  struct LrDataset **out);

/**
 * Builds a dataset from a row-major `n_samples × n_features` matrix and
 * integer class labels. Features are named `f0`, `f1`, ...
 *
 * # Safety
 * `values` must hold `n_samples * n_features` doubles, `labels`
 * `n_samples` integers; `out` must be valid for writes.
 */
enum LrStatus lr_dataset_from_matrix(const double *values,
                                     size_t n_samples,
                                     size_t n_features,
                                     const uint32_t *labels,
                                     struct LrDataset **out);

/**
 * # Safety
 * `dataset` must come from this library and not be used afterwards.
 */
void lr_dataset_free(struct LrDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null (returns 0).
 */
size_t lr_dataset_n_samples(const struct LrDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null (returns 0).
 */
size_t lr_dataset_n_features(const struct LrDataset *dataset);

struct LrRankOptions lr_rank_options_default(void);

/**
 * Standardizes, prefilters and ranks the features of `dataset`. The factor
 * method returns `LR_STATUS_NOT_APPLICABLE` when the adequacy gate fails.
 *
 * # Safety
 * `dataset` must be a live handle; `options` may be null for defaults;
 * `out` must be valid for writes.
 */
enum LrStatus lr_rank(const struct LrDataset *dataset,
                      enum LrMethod method,
                      const struct LrRankOptions *options,
                      struct LrRanking **out);

/**
 * # Safety
 * `ranking` must come from this library and not be used afterwards.
 */
void lr_ranking_free(struct LrRanking *ranking);

/**
 * # Safety
 * `ranking` must be a live handle or null (returns 0).
 */
size_t lr_ranking_len(const struct LrRanking *ranking);

/**
 * Score of the feature at 0-based rank `index`.
 *
 * # Safety
 * `ranking` must be a live handle; `score` must be valid for writes.
 */
enum LrStatus lr_ranking_score(const struct LrRanking *ranking, size_t index, double *score);

/**
 * Name of the feature at 0-based rank `index`, NUL-terminated.
 *
 * # Safety
 * `ranking` must be a live handle; `buf` must be valid for `capacity`
 * bytes; `written` may be null.
 */
enum LrStatus lr_ranking_feature_name(const struct LrRanking *ranking,
                                      size_t index,
                                      char *buf,
                                      size_t capacity,
                                      size_t *written);

/**
 * Runs the full experiment described by a TOML config file and writes its
 * outputs to the configured directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum LrStatus lr_run_pipeline(const char *config_path);

/**
 * Eigendecomposition of a symmetric row-major `dim × dim` matrix.
 * Eigenvalues are written in descending order; column `j` of the row-major
 * `eigenvectors` output pairs with `eigenvalues[j]`.
 *
 * # Safety
 * `matrix` and `eigenvectors` must hold `dim * dim` doubles,
 * `eigenvalues` `dim` doubles.
 */
enum LrStatus lr_eigen_symmetric(const double *matrix,
                                 size_t dim,
                                 double *eigenvalues,
                                 double *eigenvectors);

/**
 * Upper-tail probability of the chi-square distribution.
 *
 * # Safety
 * `p_value` must be valid for writes.
 */
enum LrStatus lr_chi_square_p(double statistic, size_t dof, double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOADRANK_H */
