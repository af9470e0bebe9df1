#ifndef UFM_H
#define UFM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define UFM_OK 0

/**
 * Invalid configuration or argument.
 */
#define UFM_ERR_CONFIG 2

/**
 * Divergence or another numerical failure.
 */
#define UFM_ERR_NUMERIC 3

#define UFM_ERR_IO 4

#define UFM_ERR_NULL 10

#define UFM_ERR_UTF8 11

/**
 * Caller buffer shorter than the result.
 */
#define UFM_ERR_BUFFER 12

#define UFM_ERR_PANIC 13

/**
 * Resolved experiment configuration.
 */
typedef struct UfmConfig UfmConfig;

/**
 * Result of `ufm_run_experiment`.
 */
typedef struct UfmReport UfmReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ufm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ufm_version(void);

/**
 * Config for `k` classes at imbalance ratio `ratio` with every other key at
 * its default. `reweighted` selects inverse-frequency weights with exponent
 * `gamma`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
int32_t ufm_config_new(uint32_t k,
                       double ratio,
                       bool reweighted,
                       double gamma,
                       struct UfmConfig **out);

/**
 * Parses and resolves a TOML config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
int32_t ufm_config_from_toml(const char *toml, struct UfmConfig **out);

/**
 * Reads, parses and resolves a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t ufm_config_from_file(const char *path, struct UfmConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from a `ufm_config_*` constructor that has
 * not been freed.
 */
void ufm_config_free(struct UfmConfig *cfg);

/**
 * Canonical TOML of the resolved config; free with `ufm_string_free`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
int32_t ufm_config_to_toml(const struct UfmConfig *cfg, char **out);

/**
 * Hex SHA-256 of the canonical TOML; free with `ufm_string_free`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
int32_t ufm_config_digest(const struct UfmConfig *cfg, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void ufm_string_free(char *s);

/**
 * Runs gradient descent for `cfg`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
int32_t ufm_run_experiment(const struct UfmConfig *cfg, struct UfmReport **out);

/**
 * # Safety
 * `report` must be NULL or a handle from `ufm_run_experiment`, not yet
 * freed.
 */
void ufm_report_free(struct UfmReport *report);

/**
 * Number of modes, `k − 1`; 0 if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
uintptr_t ufm_report_num_modes(const struct UfmReport *report);

/**
 * Number of recorded steps; 0 if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
uintptr_t ufm_report_num_records(const struct UfmReport *report);

/**
 * Rescaled crossing time per mode; NaN where a mode never crossed.
 *
 * # Safety
 * `report` must be a live report handle; `out` must hold `len` doubles.
 */
int32_t ufm_report_empirical_times(const struct UfmReport *report, double *out, uintptr_t len);

/**
 * Max over records of `|simulated − theory|`, per mode.
 *
 * # Safety
 * `report` must be a live report handle; `out` must hold `len` doubles.
 */
int32_t ufm_report_theory_error(const struct UfmReport *report, double *out, uintptr_t len);

/**
 * Mode factors at record `index`.
 *
 * # Safety
 * `report` must be a live report handle; `out` must hold `len` doubles.
 */
int32_t ufm_report_mode_factors(const struct UfmReport *report,
                                uintptr_t index,
                                double *out,
                                uintptr_t len);

/**
 * Closed-form learning times and window of the report's problem.
 *
 * # Safety
 * `report` must be a live report handle; `times` must hold `len` doubles and
 * `window` must be writable.
 */
int32_t ufm_report_schedule(const struct UfmReport *report,
                            double *times,
                            uintptr_t len,
                            double *window);

/**
 * Writes the configured report files and a manifest under `out_dir`.
 *
 * # Safety
 * `report` must be a live report handle; `out_dir` a NUL-terminated string.
 */
int32_t ufm_report_write(const struct UfmReport *report, const char *out_dir);

/**
 * Closed-form singular values of the centered STEP label matrix with one
 * example per minority class (`k − 1` values).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
int32_t ufm_closed_form_sigma(uint32_t k, double ratio, double *out, uintptr_t len);

/**
 * Effective per-mode weights under inverse-frequency weights with exponent
 * `gamma` (`k − 1` values).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
int32_t ufm_effective_weights(uint32_t k, double ratio, double gamma, double *out, uintptr_t len);

/**
 * Learning times `1/(σᵢλᵢ)` and window from `n` singular values and
 * effective weights.
 *
 * # Safety
 * `sigma` and `lambda` must point to `n` doubles, `times` must hold `n`
 * doubles and `window` must be writable.
 */
int32_t ufm_learning_schedule(const double *sigma,
                              const double *lambda,
                              uintptr_t n,
                              double *times,
                              double *window);

/**
 * Closed-form mode factor at gradient-flow time `t`.
 */
double ufm_theory_factor(double sigma, double lambda, double delta, double t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UFM_H */
