#ifndef CHARUQ_H
#define CHARUQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CharuqStatus {
  CHARUQ_STATUS_OK = 0,
  CHARUQ_STATUS_NULL_POINTER = 1,
  CHARUQ_STATUS_INVALID_ARGUMENT = 2,
  CHARUQ_STATUS_CONFIG = 3,
  CHARUQ_STATUS_PARSE = 4,
  CHARUQ_STATUS_IO = 5,
  CHARUQ_STATUS_NUMERICAL = 6,
  CHARUQ_STATUS_PANIC = 7,
} CharuqStatus;

typedef enum CharuqCriterion {
  CHARUQ_CRITERION_JEFFREYS = 0,
  CHARUQ_CRITERION_BACKWARD_KL = 1,
  CHARUQ_CRITERION_FORWARD_KL = 2,
} CharuqCriterion;

typedef enum CharuqScenario {
  CHARUQ_SCENARIO_GROUND = 0,
  CHARUQ_SCENARIO_FLIGHT = 1,
} CharuqScenario;

typedef struct CharuqConfig CharuqConfig;

typedef struct CharuqProfiles CharuqProfiles;

typedef struct CharuqReport CharuqReport;

typedef struct CharuqTable CharuqTable;

/*
 Forward, backward and symmetric divergences of one pair of sample sets.
 */
typedef struct CharuqDivergences {
  double forward;
  double backward;
  double jeffreys;
} CharuqDivergences;

/*
 Headline numbers of a pipeline run.
 */
typedef struct CharuqSummary {
  double optimal_w_jeffreys;
  double optimal_w_backward_kl;
  double coverage_gap_95;
  double containment_99;
  bool overlay_verdict;
} CharuqSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread; empty when none. The pointer
 stays valid until the next failing call on this thread.
 */
const char *charuq_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *charuq_version(void);

/*
 KL divergence of `p` from `q`, both given as samples.

 # Safety
 `p` and `q` must point to `np` and `nq` readable doubles; `out` must be writable.
 */
enum CharuqStatus charuq_kl_divergence(const double *p,
                                       size_t np,
                                       const double *q,
                                       size_t nq,
                                       double *out_value);

/*
 Forward, backward and Jeffreys divergences between two sample sets. A
 `level` in (0, 1) restricts them to the hull of the two prediction
 intervals at that level; any other value disables truncation.

 # Safety
 `p` and `q` must point to `np` and `nq` readable doubles; `out` must be writable.
 */
enum CharuqStatus charuq_divergences(const double *p,
                                     size_t np,
                                     const double *q,
                                     size_t nq,
                                     double level,
                                     struct CharuqDivergences *out_value);

/*
 Empty divergence table; fill it with [`charuq_table_push`].

 # Safety
 `out_table` must be writable.
 */
enum CharuqStatus charuq_table_new(struct CharuqTable **out_table);

/*
 Reads a table CSV with columns `w,kl_mixture_reference,kl_reference_mixture,jeffreys`.

 # Safety
 `path` must be a NUL-terminated string; `out_table` must be writable.
 */
enum CharuqStatus charuq_table_read(const char *path, struct CharuqTable **out_table);

/*
 Appends one row.

 # Safety
 `table` must come from this library and not be freed.
 */
enum CharuqStatus charuq_table_push(struct CharuqTable *table,
                                    double w,
                                    double kl_mixture_reference,
                                    double kl_reference_mixture,
                                    double jeffreys);

/*
 # Safety
 `table` must come from this library; `out_len` must be writable.
 */
enum CharuqStatus charuq_table_len(const struct CharuqTable *table, size_t *out_len);

/*
 Weight minimizing the chosen criterion; ties go to the larger weight.

 # Safety
 `table` must come from this library; `out_w` must be writable.
 */
enum CharuqStatus charuq_select_w(const struct CharuqTable *table,
                                  enum CharuqCriterion crit,
                                  double *out_w);

/*
 # Safety
 `table` must come from this library and is invalid afterwards; null is ignored.
 */
void charuq_table_free(struct CharuqTable *table);

/*
 Built-in default configuration.

 # Safety
 `out_config` must be writable.
 */
enum CharuqStatus charuq_config_default(struct CharuqConfig **out_config);

/*
 Loads and validates a JSON configuration file.

 # Safety
 `path` must be a NUL-terminated string; `out_config` must be writable.
 */
enum CharuqStatus charuq_config_load(const char *path, struct CharuqConfig **out_config);

/*
 # Safety
 `config` must come from this library.
 */
enum CharuqStatus charuq_config_set_seed(struct CharuqConfig *config, uint64_t seed);

/*
 Writes the 64-character hex hash plus NUL into `buf` (at least 65 bytes).

 # Safety
 `config` must come from this library; `buf` must hold `len` bytes.
 */
enum CharuqStatus charuq_config_hash(const struct CharuqConfig *config, char *buf, size_t len);

/*
 # Safety
 `config` must come from this library and is invalid afterwards; null is ignored.
 */
void charuq_config_free(struct CharuqConfig *config);

/*
 Noise-free solver thermocouple histories of a scenario at its configured
 truth values.

 # Safety
 `config` must come from this library; `out_profiles` must be writable.
 */
enum CharuqStatus charuq_simulate(const struct CharuqConfig *config,
                                  enum CharuqScenario scenario,
                                  struct CharuqProfiles **out_profiles);

/*
 Number of thermocouples and samples per thermocouple.

 # Safety
 `profiles` must come from this library; outputs must be writable.
 */
enum CharuqStatus charuq_profiles_shape(const struct CharuqProfiles *profiles,
                                        size_t *out_n_tc,
                                        size_t *out_n_times);

/*
 Copies the times and temperatures of thermocouple `tc`; both buffers
 must hold `len` doubles, which must equal the profile length.

 # Safety
 `profiles` must come from this library; buffers must hold `len` doubles.
 */
enum CharuqStatus charuq_profiles_copy(const struct CharuqProfiles *profiles,
                                       size_t tc,
                                       double *times,
                                       double *values,
                                       size_t len);

/*
 # Safety
 `profiles` must come from this library and is invalid afterwards; null is ignored.
 */
void charuq_profiles_free(struct CharuqProfiles *profiles);

/*
 Runs the full pipeline, writing its outputs under `out_dir`.

 # Safety
 `config` must come from this library; `out_dir` must be a NUL-terminated
 string; `out_report` must be writable.
 */
enum CharuqStatus charuq_run_pipeline(const struct CharuqConfig *config,
                                      const char *out_dir,
                                      bool run_morris,
                                      struct CharuqReport **out_report);

/*
 # Safety
 `report` must come from this library; `out_summary` must be writable.
 */
enum CharuqStatus charuq_report_summary(const struct CharuqReport *report,
                                        struct CharuqSummary *out_summary);

/*
 # Safety
 `report` must come from this library and is invalid afterwards; null is ignored.
 */
void charuq_report_free(struct CharuqReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHARUQ_H */
