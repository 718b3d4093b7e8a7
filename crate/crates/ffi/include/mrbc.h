#ifndef MRBC_H
#define MRBC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MrbcStatus {
  MRBC_STATUS_OK = 0,
  MRBC_STATUS_NULL_ARGUMENT = 1,
  MRBC_STATUS_INVALID_UTF8 = 2,
  MRBC_STATUS_CONFIG = 3,
  MRBC_STATUS_IO = 4,
  MRBC_STATUS_NOT_FOUND = 5,
  MRBC_STATUS_ANALYSIS = 6,
  MRBC_STATUS_BUFFER_TOO_SMALL = 7,
  MRBC_STATUS_INVALID_ARGUMENT = 8,
  MRBC_STATUS_PANIC = 9,
} MrbcStatus;

typedef enum MrbcVerdictKind {
  MRBC_VERDICT_KIND_COMPLETED = 0,
  MRBC_VERDICT_KIND_ENVELOPE_VIOLATION = 2,
  MRBC_VERDICT_KIND_NUMERIC_FAILURE = 3,
} MrbcVerdictKind;

/**
 * Opaque run handle: trace plus verdict.
 */
typedef struct MrbcRun MrbcRun;

/**
 * Opaque scenario handle.
 */
typedef struct MrbcScenario MrbcScenario;

typedef struct MrbcVerdict {
  enum MrbcVerdictKind kind;
  /**
   * 1-based; 0 unless `kind` is an envelope violation.
   */
  size_t subsystem;
  /**
   * Failure time; the final time for a completed run.
   */
  double t;
} MrbcVerdict;

typedef struct MrbcReport {
  size_t samples;
  double rho_ob;
  double ell_ob;
  double rho_cont;
  double ell_cont;
  double rho_all;
  double ell_all;
  double bound_ob_ok;
  double bound_cont_ok;
  double bound_all_ok;
  double rate_ob_ok;
  double rate_cont_ok;
  double rate_all_ok;
  double fitted_decay;
  double fitted_decay_bar;
  double radius_ob;
  double radius_cont;
  double radius_all;
  double connector_residual;
  double connector_bar_residual;
  double sup_delta_u;
  size_t saturated_samples;
  size_t violations;
} MrbcReport;

typedef struct MrbcSaturation {
  double applied;
  double alpha1;
  double alpha2;
  double delta;
} MrbcSaturation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mrbc_version(void);

/**
 * Message of the last failing call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *mrbc_last_error(void);

/**
 * Parses and validates a scenario from TOML text.
 */
enum MrbcStatus mrbc_scenario_from_str(const char *toml, struct MrbcScenario **out);

enum MrbcStatus mrbc_scenario_from_file(const char *path, struct MrbcScenario **out);

/**
 * One of the scenarios shipped with the library, by name.
 */
enum MrbcStatus mrbc_scenario_bundled(const char *name, struct MrbcScenario **out);

/**
 * Seeds above `INT64_MAX` are rejected with `MRBC_STATUS_INVALID_ARGUMENT`.
 */
enum MrbcStatus mrbc_scenario_set_seed(struct MrbcScenario *s, uint64_t seed);

/**
 * System order, or 0 for a null handle.
 */
size_t mrbc_scenario_order(const struct MrbcScenario *s);

void mrbc_scenario_free(struct MrbcScenario *s);

/**
 * Simulates the scenario. Returns `Ok` whenever a trace was produced,
 * including runs that stop on a violation; inspect the verdict.
 */
enum MrbcStatus mrbc_run(const struct MrbcScenario *s, struct MrbcRun **out);

enum MrbcStatus mrbc_run_verdict(const struct MrbcRun *r, struct MrbcVerdict *out);

/**
 * Number of recorded samples, or 0 for a null handle.
 */
size_t mrbc_run_len(const struct MrbcRun *r);

/**
 * Copies one trace column (CSV header name, e.g. `ebar1`) into `buf`.
 * `written` receives the column length; when `cap` is too small nothing is
 * copied and `BufferTooSmall` is returned.
 */
enum MrbcStatus mrbc_run_column(const struct MrbcRun *r,
                                const char *name,
                                double *buf,
                                size_t cap,
                                size_t *written);

enum MrbcStatus mrbc_run_write_csv(const struct MrbcRun *r, const char *path);

/**
 * Stability monitors over a run, using the scenario's gains.
 */
enum MrbcStatus mrbc_run_analyze(const struct MrbcRun *r,
                                 const struct MrbcScenario *s,
                                 struct MrbcReport *out);

void mrbc_run_free(struct MrbcRun *r);

/**
 * Amplitude saturation `α(u) = α1 u + α2` with limits `[u_min, u_max]`.
 */
enum MrbcStatus mrbc_saturate(double u, double u_min, double u_max, struct MrbcSaturation *out);

/**
 * Envelope `o(t) = (o_shoot - o_bound) e^{-o_rate t} + o_bound`.
 */
double mrbc_envelope(double t, double o_shoot, double o_bound, double o_rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRBC_H */
