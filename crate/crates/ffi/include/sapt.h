#ifndef SAPT_H
#define SAPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SaptStatus {
  SAPT_STATUS_OK = 0,
  SAPT_STATUS_NULL_POINTER = 1,
  SAPT_STATUS_INVALID_ARGUMENT = 2,
  SAPT_STATUS_CONFIG = 3,
  SAPT_STATUS_IO = 4,
  SAPT_STATUS_RUNTIME = 5,
  SAPT_STATUS_PANIC = 6,
} SaptStatus;

typedef enum SaptProposal {
  SAPT_PROPOSAL_RANDOM_WALK = 0,
  /**
   * Langevin-gradient steps mixed with random-walk steps.
   */
  SAPT_PROPOSAL_LANGEVIN = 1,
} SaptProposal;

/**
 * Sampler settings. Starts from the library defaults.
 */
typedef struct SaptConfig SaptConfig;

/**
 * A train/test pair, normalized with training statistics.
 */
typedef struct SaptData SaptData;

/**
 * Posterior samples and run statistics of a finished run.
 */
typedef struct SaptRun SaptRun;

typedef struct SaptCounts {
  uint64_t true_evals;
  uint64_t surrogate_evals;
  uint64_t swap_attempts;
  uint64_t swap_accepts;
  double elapsed_seconds;
} SaptCounts;

/**
 * Classification accuracy in percent over thinned posterior samples.
 */
typedef struct SaptAccuracy {
  double train_mean;
  double train_std;
  double train_best;
  double test_mean;
  double test_std;
  double test_best;
} SaptAccuracy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sapt_version(void);

/**
 * Bytes needed to hold the last error message of this thread, including the NUL.
 */
size_t sapt_last_error_length(void);

/**
 * Copies the last error message of this thread into `buf`, truncating to
 * `len - 1` bytes and always NUL-terminating. Returns the full message
 * length including the NUL, so callers can detect truncation.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t sapt_last_error_message(char *buf, size_t len);

/**
 * New configuration holding the library defaults. Free with [`sapt_config_free`].
 */
struct SaptConfig *sapt_config_new(void);

/**
 * # Safety
 * `config` must be NULL or a pointer from [`sapt_config_new`] not yet freed.
 */
void sapt_config_free(struct SaptConfig *config);

/**
 * Sets the replica count and the total sample budget shared by all replicas.
 *
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_size(struct SaptConfig *config,
                                     size_t replicas,
                                     size_t total_samples);

/**
 * Steps between swap sweeps and between surrogate training rounds.
 *
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_intervals(struct SaptConfig *config, size_t swap, size_t surrogate);

/**
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_tempering(struct SaptConfig *config,
                                          double max_temp,
                                          double burn_in_fraction);

/**
 * Per-step probability of estimating the likelihood with the surrogate; 0 disables it.
 *
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_surrogate_prob(struct SaptConfig *config, double prob);

/**
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_proposal(struct SaptConfig *config,
                                         enum SaptProposal kind,
                                         double rw_step_sd,
                                         double lg_rate,
                                         double lg_prob);

/**
 * Sets the base seed and whether replicas run on the calling thread.
 *
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_set_seed(struct SaptConfig *config, uint64_t seed, bool sequential);

/**
 * Checks the configuration without running anything.
 *
 * # Safety
 * `config` must be a live pointer from [`sapt_config_new`].
 */
enum SaptStatus sapt_config_validate(const struct SaptConfig *config);

/**
 * Loads a registered dataset (iris, cancer, ...) and splits it.
 * `data_dir` may be NULL; it is only consulted for datasets that are not bundled.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `data_dir` NULL or NUL-terminated,
 * and `out` a valid pointer to receive the handle.
 */
enum SaptStatus sapt_data_load(const char *name,
                               const char *data_dir,
                               double train_fraction,
                               uint64_t seed,
                               struct SaptData **out);

/**
 * Loads a CSV file (features then an integer label per row) and splits it.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SaptStatus sapt_data_load_csv(const char *path,
                                   bool has_header,
                                   double train_fraction,
                                   uint64_t seed,
                                   struct SaptData **out);

/**
 * # Safety
 * `data` must be NULL or a handle from a `sapt_data_load*` call not yet freed.
 */
void sapt_data_free(struct SaptData *data);

/**
 * Row counts of the train and test splits plus input and class counts.
 *
 * # Safety
 * `data` must be a live data handle; output pointers may be NULL.
 */
enum SaptStatus sapt_data_shape(const struct SaptData *data,
                                size_t *train_rows,
                                size_t *test_rows,
                                size_t *inputs,
                                size_t *classes);

/**
 * Samples the network posterior on the training split.
 * `hidden_units` of 0 takes the registry value (an error for CSV data).
 *
 * # Safety
 * `config` and `data` must be live handles and `out` a valid pointer.
 */
enum SaptStatus sapt_run(const struct SaptConfig *config,
                         const struct SaptData *data,
                         size_t hidden_units,
                         double prior_var,
                         struct SaptRun **out);

/**
 * # Safety
 * `run` must be NULL or a handle from [`sapt_run`] not yet freed.
 */
void sapt_run_free(struct SaptRun *run);

/**
 * Number of retained posterior samples, or 0 for a NULL handle.
 *
 * # Safety
 * `run` must be NULL or a live run handle.
 */
size_t sapt_run_sample_count(const struct SaptRun *run);

/**
 * Parameters per sample, or 0 for a NULL handle.
 *
 * # Safety
 * `run` must be NULL or a live run handle.
 */
size_t sapt_run_dim(const struct SaptRun *run);

/**
 * Copies the posterior samples row-major (sample count x dim) into `buf`.
 * `len` is the capacity of `buf` in doubles and must cover every sample.
 *
 * # Safety
 * `run` must be a live run handle and `buf` point to `len` writable doubles.
 */
enum SaptStatus sapt_run_copy_samples(const struct SaptRun *run, double *buf, size_t len);

/**
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum SaptStatus sapt_run_counts(const struct SaptRun *run, struct SaptCounts *out);

/**
 * Accuracy of every `thin`-th posterior sample on the data handle's splits.
 *
 * # Safety
 * `run` and `data` must be live handles and `out` a valid pointer.
 */
enum SaptStatus sapt_run_accuracy(const struct SaptRun *run,
                                  const struct SaptData *data,
                                  size_t thin,
                                  struct SaptAccuracy *out);

/**
 * Writes the run report as `key = value` text into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full length including the NUL,
 * or 0 for a NULL handle.
 *
 * # Safety
 * `run` must be NULL or a live run handle; `buf` NULL or `len` writable bytes.
 */
size_t sapt_run_report(const struct SaptRun *run, char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAPT_H */
