#ifndef CROMS_H
#define CROMS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which selection procedure a tabular predictor runs.
typedef enum CromsMethod {
  // Full-conformal selection, exact finite-sample coverage.
  CROMS_METHOD_FULL_CONFORMAL = 0,
  // Selection on the labeled data only, then split conformal.
  CROMS_METHOD_EFFICIENT = 1,
} CromsMethod;

// Result code of every exported function.
typedef enum CromsStatus {
  CROMS_STATUS_OK = 0,
  CROMS_STATUS_NULL_POINTER = 1,
  CROMS_STATUS_INVALID_ARGUMENT = 2,
  CROMS_STATUS_NUMERICAL = 3,
  CROMS_STATUS_CONFIG = 4,
  CROMS_STATUS_IO = 5,
  CROMS_STATUS_PANIC = 6,
} CromsStatus;

// A parsed experiment configuration.
typedef struct CromsExperiment CromsExperiment;

// Model selection over classifiers given only through their predicted
// class probabilities on a labeled set. Scores are `1 - p_y(x)`.
typedef struct CromsTabular CromsTabular;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// call into the library from the same thread.
const char *croms_last_error(void);

// Library version as a static NUL-terminated string.
const char *croms_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void croms_string_free(char *s);

// Empirical quantile: the `ceil(level * len)`-th smallest value, `+inf`
// when that rank exceeds `len`.
//
// # Safety
// `values` must hold `len` doubles; `out` must be writable.
enum CromsStatus croms_empirical_quantile(const double *values,
                                          size_t len,
                                          double level,
                                          double *out);

// Quantile of a discrete distribution with the given weights (summing to 1).
//
// # Safety
// `values` and `weights` must hold `len` doubles; `out` must be writable.
enum CromsStatus croms_weighted_quantile(const double *values,
                                         const double *weights,
                                         size_t len,
                                         double level,
                                         double *out);

// Split-conformal threshold at level `(1 - alpha)(1 + 1/len)`.
//
// # Safety
// `scores` must hold `len` doubles; `out` must be writable.
enum CromsStatus croms_conformal_threshold(const double *scores,
                                           size_t len,
                                           double alpha,
                                           double *out);

// Full-conformal threshold: the `1 - alpha` quantile of the scores together
// with `test_score`.
//
// # Safety
// `scores` must hold `len` doubles; `out` must be writable.
enum CromsStatus croms_augmented_threshold(const double *scores,
                                           size_t len,
                                           double test_score,
                                           double alpha,
                                           double *out);

// Finite robust decision: the column `z` minimizing `max_{y in set} L[y][z]`
// over a row-major `rows x cols` loss matrix. Ties go to the lowest index.
//
// # Safety
// `matrix` must hold `rows * cols` doubles, `set` must hold `set_len`
// indices, `decision` and `worst` must be writable.
enum CromsStatus croms_solve_finite(const double *matrix,
                                    size_t rows,
                                    size_t cols,
                                    const size_t *set,
                                    size_t set_len,
                                    size_t *decision,
                                    double *worst);

// Portfolio weights minimizing the worst-case loss `-y'z` over the box
// `|y_j - mu_j| <= q`.
//
// # Safety
// `mu` must hold `p` doubles, `weights` must be writable for `p` doubles and
// `worst` for one.
enum CromsStatus croms_solve_box_portfolio(const double *mu,
                                           size_t p,
                                           double q,
                                           double *weights,
                                           double *worst);

// Portfolio weights minimizing the worst-case loss `-y'z` over the ellipsoid
// `(y - mu)' sigma^-1 (y - mu) <= q`, by projected gradient descent with
// default settings. `sigma` is row-major `p x p`.
//
// # Safety
// `mu` must hold `p` doubles and `sigma` `p * p`; `weights` must be
// writable for `p` doubles and `worst` for one.
enum CromsStatus croms_solve_ellipsoid_portfolio(const double *mu,
                                                 const double *sigma,
                                                 size_t p,
                                                 double q,
                                                 double *weights,
                                                 double *worst);

// Parses and validates a TOML experiment config.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` writable.
enum CromsStatus croms_experiment_from_toml(const char *toml, struct CromsExperiment **out);

// Loads a built-in preset by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` writable.
enum CromsStatus croms_experiment_from_preset(const char *name, struct CromsExperiment **out);

// Serializes the configuration as TOML into a new string that the caller
// releases with `croms_string_free`.
//
// # Safety
// `exp` must be a live handle and `out` writable.
enum CromsStatus croms_experiment_to_toml(const struct CromsExperiment *exp, char **out);

// Overrides the master seed and replication count; 0 keeps the current
// replication count.
//
// # Safety
// `exp` must be a live handle.
enum CromsStatus croms_experiment_set_seed(struct CromsExperiment *exp,
                                           uint64_t master_seed,
                                           size_t replications);

// Runs the experiment and writes its CSV, SVG and metadata files into
// `out_dir`. `jobs` = 0 uses every core. The number of data rows is written
// to `rows` when it is not null.
//
// # Safety
// `exp` must be a live handle and `out_dir` a NUL-terminated string.
enum CromsStatus croms_experiment_run(const struct CromsExperiment *exp,
                                      const char *out_dir,
                                      size_t jobs,
                                      size_t *rows);

// Releases an experiment handle. Null is ignored.
//
// # Safety
// `exp` must be null or a handle not yet freed.
void croms_experiment_free(struct CromsExperiment *exp);

// Builds a tabular predictor.
//
// `probs` is `num_models x n x classes`, row-major; `labels` holds `n` class
// indices; `loss` is the row-major `classes x classes` matrix `L[y][z]`.
//
// # Safety
// All pointers must be valid for the stated lengths and `out` writable.
enum CromsStatus croms_tabular_new(const double *probs,
                                   size_t num_models,
                                   size_t n,
                                   size_t classes,
                                   const size_t *labels,
                                   const double *loss,
                                   double alpha,
                                   struct CromsTabular **out);

// Selects a model for one test point and returns its robust decision.
//
// `test_probs` is `num_models x classes`. `in_set` receives 0/1 membership
// of each class in the prediction set; `model`, `decision` and `worst`
// receive the selected model index, the chosen action and its worst-case
// loss over the set.
//
// # Safety
// `tab` must be a live handle; pointers must be valid for the stated lengths.
enum CromsStatus croms_tabular_predict(const struct CromsTabular *tab,
                                       const double *test_probs,
                                       enum CromsMethod method,
                                       uint8_t *in_set,
                                       size_t *model,
                                       size_t *decision,
                                       double *worst);

// Releases a tabular predictor. Null is ignored.
//
// # Safety
// `tab` must be null or a handle not yet freed.
void croms_tabular_free(struct CromsTabular *tab);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROMS_H */
