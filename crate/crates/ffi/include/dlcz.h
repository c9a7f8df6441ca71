#ifndef DLCZ_H
#define DLCZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DlczStatus {
  DLCZ_STATUS_OK = 0,
  DLCZ_STATUS_NULL_POINTER = 1,
  DLCZ_STATUS_INVALID_ARGUMENT = 2,
  DLCZ_STATUS_CONFIG = 3,
  DLCZ_STATUS_SIMULATION = 4,
  DLCZ_STATUS_ANALYSIS = 5,
  DLCZ_STATUS_IO = 6,
  DLCZ_STATUS_PANIC = 7,
} DlczStatus;

typedef enum DlczMode {
  DLCZ_MODE_PAIR = 0,
  DLCZ_MODE_AUTO1 = 1,
  DLCZ_MODE_AUTO2 = 2,
} DlczMode;

typedef enum DlczCorrelation {
  DLCZ_CORRELATION_G11 = 0,
  DLCZ_CORRELATION_G22 = 1,
  DLCZ_CORRELATION_G12 = 2,
} DlczCorrelation;

typedef enum DlczVerdict {
  DLCZ_VERDICT_SATISFIED = 0,
  DLCZ_VERDICT_VIOLATED = 1,
} DlczVerdict;

typedef enum DlczFormat {
  DLCZ_FORMAT_JSON = 0,
  DLCZ_FORMAT_CSV = 1,
} DlczFormat;

typedef struct DlczEvents DlczEvents;

typedef struct DlczReport DlczReport;

typedef struct DlczScenario DlczScenario;

/**
 * Analytic moments; undefined values are NaN.
 */
typedef struct DlczMoments {
  double mean1;
  double mean2;
  double g11;
  double g22;
  double g12;
  double ratio;
} DlczMoments;

/**
 * One detection: detector 1 or 2, time in picoseconds from trial start.
 */
typedef struct DlczEvent {
  uint64_t trial_index;
  uint8_t detector;
  int64_t time_ps;
} DlczEvent;

typedef struct DlczEstimate {
  double value;
  double sigma;
} DlczEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *dlcz_last_error(void);

const char *dlcz_version(void);

void dlcz_string_free(char *s);

enum DlczStatus dlcz_scenario_from_preset(const char *name, struct DlczScenario **out);

/**
 * Parses a single-scenario TOML document.
 */
enum DlczStatus dlcz_scenario_from_toml(const char *text, struct DlczScenario **out);

void dlcz_scenario_free(struct DlczScenario *s);

/**
 * Seeds above `INT64_MAX` are rejected.
 */
enum DlczStatus dlcz_scenario_set_seed(struct DlczScenario *s, uint64_t seed);

enum DlczStatus dlcz_scenario_set_trials(struct DlczScenario *s, uint64_t trials);

/**
 * Changes the gate width, scaling per-gate backgrounds to keep rates fixed.
 */
enum DlczStatus dlcz_scenario_set_gate_width(struct DlczScenario *s, double gate_width_ns);

enum DlczStatus dlcz_scenario_set_dead_time(struct DlczScenario *s, double dead_time_ns);

/**
 * Analytic per-gate moments the simulation converges to.
 */
enum DlczStatus dlcz_predict(const struct DlczScenario *s, struct DlczMoments *out);

enum DlczStatus dlcz_ideal_ratio_paper(double p, double *out);

enum DlczStatus dlcz_ideal_ratio_model(double p, double *out);

/**
 * Simulates one splitter setting. `n_workers == 0` uses every core; the
 * result does not depend on it.
 */
enum DlczStatus dlcz_simulate(const struct DlczScenario *s,
                              enum DlczMode mode,
                              uint32_t n_workers,
                              struct DlczEvents **out);

void dlcz_events_free(struct DlczEvents *e);

/**
 * Number of events; 0 for a null handle.
 */
uintptr_t dlcz_events_len(const struct DlczEvents *e);

enum DlczStatus dlcz_events_mode(const struct DlczEvents *e, enum DlczMode *out);

enum DlczStatus dlcz_events_get(const struct DlczEvents *e, uintptr_t index, struct DlczEvent *out);

enum DlczStatus dlcz_events_write(const struct DlczEvents *e, const char *path);

enum DlczStatus dlcz_events_read(const char *path, struct DlczEvents **out);

/**
 * Simulates the pair, auto1 and auto2 settings and analyzes them.
 */
enum DlczStatus dlcz_run(const struct DlczScenario *s, uint32_t n_workers, struct DlczReport **out);

/**
 * Analyzes three event streams recorded with the pair, auto1 and auto2
 * settings of `s`.
 */
enum DlczStatus dlcz_analyze(const struct DlczScenario *s,
                             const struct DlczEvents *pair,
                             const struct DlczEvents *auto1,
                             const struct DlczEvents *auto2,
                             struct DlczReport **out);

void dlcz_report_free(struct DlczReport *r);

enum DlczStatus dlcz_report_g(const struct DlczReport *r,
                              enum DlczCorrelation which,
                              struct DlczEstimate *out);

/**
 * `R = g12^2 / (g11 g22)` with its propagated error.
 */
enum DlczStatus dlcz_report_ratio(const struct DlczReport *r, struct DlczEstimate *out);

/**
 * `(R - 1) / sigma_R`; fails when sigma_R is zero.
 */
enum DlczStatus dlcz_report_significance(const struct DlczReport *r, double *out);

enum DlczStatus dlcz_report_verdict(const struct DlczReport *r, enum DlczVerdict *out);

/**
 * JSON report; release with `dlcz_string_free`.
 */
enum DlczStatus dlcz_report_to_json(const struct DlczReport *r, char **out);

/**
 * Writes the report and histogram CSVs into `dir`.
 */
enum DlczStatus dlcz_report_export(const struct DlczReport *r,
                                   const char *dir,
                                   enum DlczFormat format);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DLCZ_H */
