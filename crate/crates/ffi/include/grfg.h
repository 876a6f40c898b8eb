#ifndef GRFG_H
#define GRFG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum {
  GRFG_STATUS_OK = 0,
  GRFG_STATUS_NULL_POINTER = 1,
  GRFG_STATUS_INVALID_UTF8 = 2,
  GRFG_STATUS_IO = 3,
  GRFG_STATUS_PARSE = 4,
  GRFG_STATUS_INVALID_INPUT = 5,
  GRFG_STATUS_CONFIG = 6,
  GRFG_STATUS_ABORTED = 7,
  GRFG_STATUS_OUT_OF_RANGE = 8,
  GRFG_STATUS_PANIC = 9,
} GrfgStatus;

// Run configuration, starting from defaults.
typedef struct GrfgConfig GrfgConfig;

// Loaded dataset: original descriptors plus target.
typedef struct GrfgDataset GrfgDataset;

// Finished run: report, best descriptor set and trace.
typedef struct GrfgResult GrfgResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if it succeeded.
//
// The pointer stays valid until the next grfg call on the same thread.
const char *grfg_last_error_message(void);

// Releases a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void grfg_string_free(char *s);

// Loads a CSV whose non-target columns become original descriptors.
//
// # Safety
// `path` and `target` must be NUL-terminated strings; `out` must be writable.
GrfgStatus grfg_dataset_load_csv(const char *path, const char *target, GrfgDataset **out);

// Builds a dataset from column-major values: column `j` occupies
// `values[j * n_rows .. (j + 1) * n_rows]`.
//
// # Safety
// `names` must hold `n_cols` strings, `values` `n_cols * n_rows` doubles and
// `target` `n_rows` doubles; `out` must be writable.
GrfgStatus grfg_dataset_from_columns(const char *const *names,
                                     size_t n_cols,
                                     const double *values,
                                     size_t n_rows,
                                     const char *target_name,
                                     const double *target,
                                     GrfgDataset **out);

// Number of samples, or 0 for null.
//
// # Safety
// `d` must be null or a live dataset handle.
size_t grfg_dataset_n_samples(const GrfgDataset *d);

// Number of descriptors, or 0 for null.
//
// # Safety
// `d` must be null or a live dataset handle.
size_t grfg_dataset_n_descriptors(const GrfgDataset *d);

// Releases a dataset. Null is a no-op.
//
// # Safety
// `d` must be null or a handle not yet freed.
void grfg_dataset_free(GrfgDataset *d);

// Evaluates an expression such as `mul(f1,sin(f2))` against the dataset's
// original descriptors, writing `n_samples` values into `out`.
//
// # Safety
// `expr` must be a NUL-terminated string and `out` must hold `len` doubles.
GrfgStatus grfg_evaluate_expression(const GrfgDataset *d,
                                    const char *expr,
                                    double *out,
                                    size_t len);

// Plug-in mutual information in nats over `n_bins` equal-frequency bins.
//
// # Safety
// `x` and `z` must hold `n` doubles; `out` must be writable.
GrfgStatus grfg_mutual_information(const double *x,
                                   const double *z,
                                   size_t n,
                                   size_t n_bins,
                                   double *out);

// Creates a configuration holding the defaults.
//
// # Safety
// `out` must be writable.
GrfgStatus grfg_config_new(GrfgConfig **out);

// Sets one key using the same names and syntax as the config file.
//
// # Safety
// `key` and `value` must be NUL-terminated strings.
GrfgStatus grfg_config_set(GrfgConfig *cfg, const char *key, const char *value);

// Replaces the configuration with the parsed contents of `text`.
//
// # Safety
// `text` must be a NUL-terminated string.
GrfgStatus grfg_config_parse(GrfgConfig *cfg, const char *text);

// Releases a configuration. Null is a no-op.
//
// # Safety
// `cfg` must be null or a handle not yet freed.
void grfg_config_free(GrfgConfig *cfg);

// Runs the configured mode on the dataset.
//
// # Safety
// `d` and `cfg` must be live handles; `out` must be writable.
GrfgStatus grfg_run(const GrfgDataset *d, const GrfgConfig *cfg, GrfgResult **out);

// Downstream score of the best descriptor set.
//
// # Safety
// `r` must be a live result handle; `out` must be writable.
GrfgStatus grfg_result_best_va(const GrfgResult *r, double *out);

// Number of descriptors in the best set, or 0 for null.
//
// # Safety
// `r` must be null or a live result handle.
size_t grfg_result_n_best(const GrfgResult *r);

// Canonical expression of best-set descriptor `index`.
// Release the string with [`grfg_string_free`].
//
// # Safety
// `r` must be a live result handle; `out` must be writable.
GrfgStatus grfg_result_best_name(const GrfgResult *r, size_t index, char **out);

// Full run report as JSON. Release the string with [`grfg_string_free`].
//
// # Safety
// `r` must be a live result handle; `out` must be writable.
GrfgStatus grfg_result_report_json(const GrfgResult *r, char **out);

// Writes report.json, best_features.csv and trace.log into `dir`.
//
// # Safety
// `r` must be a live result handle; `dir` a NUL-terminated string.
GrfgStatus grfg_result_write(const GrfgResult *r, const char *dir);

// Releases a result. Null is a no-op.
//
// # Safety
// `r` must be null or a handle not yet freed.
void grfg_result_free(GrfgResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRFG_H */
