#ifndef MACHOPT_H
#define MACHOPT_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MachoptStatus {
  MACHOPT_STATUS_OK = 0,
  // Null pointer or non-UTF-8 string.
  MACHOPT_STATUS_INVALID_ARGUMENT = 1,
  MACHOPT_STATUS_VALIDATION = 2,
  MACHOPT_STATUS_NUMERICAL = 3,
  MACHOPT_STATUS_MISSING_ARTIFACT = 4,
  MACHOPT_STATUS_IO = 5,
  MACHOPT_STATUS_PANIC = 6,
} MachoptStatus;

typedef enum MachoptScale {
  MACHOPT_SCALE_CODED = 0,
  MACHOPT_SCALE_RAW = 1,
} MachoptScale;

typedef enum MachoptMachine {
  MACHOPT_MACHINE_A = 0,
  MACHOPT_MACHINE_B = 1,
} MachoptMachine;

typedef enum MachoptMetric {
  MACHOPT_METRIC_RELATIVE = 0,
  MACHOPT_METRIC_EUCLIDEAN = 1,
  MACHOPT_METRIC_LOG = 2,
} MachoptMetric;

// Validated experimental runs over the default factor levels.
typedef struct MachoptDataset MachoptDataset;

// Posterior draws together with the covariate scale they were fitted on.
typedef struct MachoptDraws MachoptDraws;

// Optimal operating point for one machine.
typedef struct MachoptOptimum {
  // Depth, feed and spindle settings in raw units.
  double e_star[3];
  double roughness;
  double power;
  double distance;
  size_t generation_found;
  size_t evaluations;
} MachoptOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *machopt_last_error(void);

// Parses a dataset CSV (`machine,x1,x2,x3,roughness,power`).
//
// # Safety
// `csv` must be a NUL-terminated string; `out` must be writable.
enum MachoptStatus machopt_dataset_parse(const char *csv, struct MachoptDataset **out);

// Number of runs, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t machopt_dataset_len(const struct MachoptDataset *ds);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void machopt_dataset_free(struct MachoptDataset *ds);

// Fits the SUR model with the default prior.
//
// # Safety
// `ds` must be a live dataset handle; `out` must be writable.
enum MachoptStatus machopt_fit(const struct MachoptDataset *ds,
                               enum MachoptScale scale,
                               size_t iterations,
                               size_t burn_in,
                               size_t thin,
                               size_t chains,
                               uint64_t seed,
                               struct MachoptDraws **out);

// Loads draws from their CSV export.
//
// # Safety
// `csv` must be a NUL-terminated string; `out` must be writable.
enum MachoptStatus machopt_draws_from_csv(const char *csv,
                                          enum MachoptScale scale,
                                          struct MachoptDraws **out);

// Serializes draws to CSV. Free the string with `machopt_string_free`.
//
// # Safety
// `draws` must be a live handle; `out` must be writable.
enum MachoptStatus machopt_draws_to_csv(const struct MachoptDraws *draws, char **out);

// Number of retained draws, or 0 for NULL.
//
// # Safety
// `draws` must be NULL or a live handle.
size_t machopt_draws_len(const struct MachoptDraws *draws);

// # Safety
// `draws` must be NULL or a handle not yet freed.
void machopt_draws_free(struct MachoptDraws *draws);

// Posterior-mean prediction at raw settings `e[0..3]`.
//
// # Safety
// `draws` must be a live handle, `e` must point to 3 doubles, and the
// output pointers must be writable.
enum MachoptStatus machopt_predict_point(const struct MachoptDraws *draws,
                                         enum MachoptMachine machine,
                                         const double *e,
                                         double *out_roughness,
                                         double *out_power);

// Hybrid genetic / quasi-Newton search with default settings.
//
// # Safety
// `draws` must be a live handle; `out` must be writable.
enum MachoptStatus machopt_optimize(const struct MachoptDraws *draws,
                                    enum MachoptMachine machine,
                                    double ymin_power,
                                    double ymin_roughness,
                                    enum MachoptMetric metric,
                                    uint64_t seed,
                                    struct MachoptOptimum *out);

// Highest-density interval of `n` samples containing `mass`.
//
// # Safety
// `samples` must point to `n` doubles; the outputs must be writable.
enum MachoptStatus machopt_hdi(const double *samples,
                               size_t n,
                               double mass,
                               double *out_lower,
                               double *out_upper);

// Finite-population standard deviation of `k >= 2` effects.
//
// # Safety
// `alpha` must point to `k` doubles; `out` must be writable.
enum MachoptStatus machopt_finite_pop_sd(const double *alpha, size_t k, double *out);

// Frees a string returned by this library.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void machopt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MACHOPT_H */
