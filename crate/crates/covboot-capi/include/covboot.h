#ifndef COVBOOT_H
#define COVBOOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a C API call.
typedef enum CovbootStatus {
  COVBOOT_STATUS_OK = 0,
  // A required pointer argument was NULL.
  COVBOOT_STATUS_NULL_ARGUMENT = 1,
  // A value was out of range or otherwise invalid.
  COVBOOT_STATUS_INVALID_ARGUMENT = 2,
  // Grid sizes or series lengths do not fit together.
  COVBOOT_STATUS_DIMENSION = 3,
  // Malformed CSV input.
  COVBOOT_STATUS_PARSE = 4,
  // File system failure.
  COVBOOT_STATUS_IO = 5,
  // Unexpected internal failure.
  COVBOOT_STATUS_INTERNAL = 6,
} CovbootStatus;

// CUSUM functional selector for the changepoint test.
typedef enum CovbootCusumStat {
  // Maximum bridge norm.
  COVBOOT_CUSUM_STAT_CS = 0,
  // Average squared bridge norm.
  COVBOOT_CUSUM_STAT_CI = 1,
} CovbootCusumStat;

// A test outcome handle.
typedef struct CovbootReport CovbootReport;

// A functional time series handle.
typedef struct CovbootSeries CovbootSeries;

// Test options. Obtain defaults from `covboot_test_options_default` and
// override fields as needed.
typedef struct CovbootTestOptions {
  // RNG seed for the bootstrap.
  uint64_t seed;
  // Number of bootstrap replicates.
  uint64_t replicates;
  // Fixed block length; any value <= 0 selects the adaptive rule.
  int64_t block_length;
} CovbootTestOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default test options: seed 0, 1000 replicates, adaptive block length.
struct CovbootTestOptions covboot_test_options_default(void);

// Build a series from a row-major `n` x `m` array of values on the
// midpoint grid with `m` nodes.
//
// # Safety
// `data` must point to at least `n * m` readable doubles and `out` must
// be a valid pointer; `*out` is written only on `Ok`.
enum CovbootStatus covboot_series_from_rows(const double *data,
                                            size_t n,
                                            size_t m,
                                            struct CovbootSeries **out);

// Read a series from a CSV file written by the library or the CLI.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid
// pointer; `*out` is written only on `Ok`.
enum CovbootStatus covboot_series_read_csv(const char *path, struct CovbootSeries **out);

// Number of observations, or 0 for a NULL handle.
//
// # Safety
// `series` must be NULL or a live series handle.
size_t covboot_series_len(const struct CovbootSeries *series);

// Number of grid nodes, or 0 for a NULL handle.
//
// # Safety
// `series` must be NULL or a live series handle.
size_t covboot_series_grid_len(const struct CovbootSeries *series);

// Release a series handle. NULL is a no-op.
//
// # Safety
// `series` must be NULL or an owned handle not freed before.
void covboot_series_free(struct CovbootSeries *series);

// Test two paired series for zero cross-covariance. `options` may be
// NULL for defaults.
//
// # Safety
// `x` and `y` must be live series handles, `out` a valid pointer;
// `*out` is written only on `Ok`.
enum CovbootStatus covboot_cross_test(const struct CovbootSeries *x,
                                      const struct CovbootSeries *y,
                                      const struct CovbootTestOptions *options,
                                      struct CovbootReport **out);

// Test the covariance of `x` against a null kernel given row-major with
// `kernel_len == m * m` entries; a NULL kernel means the zero operator.
//
// # Safety
// `x` must be a live series handle; `kernel` NULL or `kernel_len`
// readable doubles; `out` valid; `*out` written only on `Ok`.
enum CovbootStatus covboot_one_sample_test(const struct CovbootSeries *x,
                                           const double *kernel,
                                           size_t kernel_len,
                                           const struct CovbootTestOptions *options,
                                           struct CovbootReport **out);

// Test `x` for a covariance changepoint with the chosen CUSUM
// functional.
//
// # Safety
// `x` must be a live series handle, `out` valid; `*out` written only on
// `Ok`.
enum CovbootStatus covboot_changepoint_test(const struct CovbootSeries *x,
                                            enum CovbootCusumStat statistic,
                                            const struct CovbootTestOptions *options,
                                            struct CovbootReport **out);

// Plug-in adaptive block length of a series.
//
// # Safety
// `series` must be a live handle and `out` a valid pointer.
enum CovbootStatus covboot_adaptive_block_length(const struct CovbootSeries *series, size_t *out);

// Observed test statistic; NaN for a NULL handle.
//
// # Safety
// `report` must be NULL or a live report handle.
double covboot_report_statistic(const struct CovbootReport *report);

// Bootstrap p-value; NaN for a NULL handle.
//
// # Safety
// `report` must be NULL or a live report handle.
double covboot_report_p_value(const struct CovbootReport *report);

// Block length the test actually used; 0 for a NULL handle.
//
// # Safety
// `report` must be NULL or a live report handle.
size_t covboot_report_block_length(const struct CovbootReport *report);

// Bootstrap critical value at one of the report's levels (the defaults
// are 0.01, 0.05 and 0.10).
//
// # Safety
// `report` must be a live report handle and `out` a valid pointer.
enum CovbootStatus covboot_report_critical_value(const struct CovbootReport *report,
                                                 double level,
                                                 double *out);

// Estimated number of pre-change rows. Fails with `InvalidArgument` for
// reports of the other tests.
//
// # Safety
// `report` must be a live report handle and `out` a valid pointer.
enum CovbootStatus covboot_report_changepoint(const struct CovbootReport *report, size_t *out);

// Render the full report as a JSON string. Release the string with
// `covboot_string_free`.
//
// # Safety
// `report` must be a live report handle and `out` a valid pointer;
// `*out` is written only on `Ok`.
enum CovbootStatus covboot_report_to_json(const struct CovbootReport *report, char **out);

// Release a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must be NULL or a string obtained from this library, freed once.
void covboot_string_free(char *s);

// Release a report handle. NULL is a no-op.
//
// # Safety
// `report` must be NULL or an owned handle not freed before.
void covboot_report_free(struct CovbootReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVBOOT_H */
