#ifndef MCMARG_H
#define MCMARG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first four match the command-line exit codes.
 */
typedef enum McmStatus {
  MCM_STATUS_OK = 0,
  MCM_STATUS_USAGE = 1,
  MCM_STATUS_DATA = 2,
  MCM_STATUS_NUMERICAL = 3,
  MCM_STATUS_NULL_POINTER = 4,
  MCM_STATUS_PANIC = 5,
} McmStatus;

/**
 * Opaque Gaussian mixture model.
 */
typedef struct McmGmm McmGmm;

/**
 * Opaque batch of samples, `count × dim`.
 */
typedef struct McmSamples McmSamples;

/**
 * Fitting options. Obtain defaults from [`mcm_fit_config_default`].
 */
typedef struct McmFitConfig {
  size_t components;
  size_t steps;
  size_t vectors_per_step;
  double learning_rate;
  /**
   * Kernel bandwidth; ignored when `silverman_bandwidth` is set.
   */
  double bandwidth;
  bool silverman_bandwidth;
  size_t grid_bins;
  double grid_padding;
  uint64_t seed;
  double adam_beta1;
  double adam_beta2;
  double adam_epsilon;
} McmFitConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mcm_last_error_message(void);

/**
 * Builds a mixture from `k` weights, `k × dim` means and `k` row-major
 * `dim × dim` covariances.
 *
 * # Safety
 * Array pointers must be valid for the lengths above; `out` must be writable.
 */
enum McmStatus mcm_gmm_from_moments(size_t dim,
                                    size_t k,
                                    const double *weights,
                                    const double *means,
                                    const double *covariances,
                                    struct McmGmm **out);

/**
 * # Safety
 * `gmm` must be null or a handle from this library not yet freed.
 */
void mcm_gmm_free(struct McmGmm *gmm);

/**
 * Dimension of the model, or 0 for a null handle.
 *
 * # Safety
 * `gmm` must be null or a live handle.
 */
size_t mcm_gmm_dim(const struct McmGmm *gmm);

/**
 * Component count, or 0 for a null handle.
 *
 * # Safety
 * `gmm` must be null or a live handle.
 */
size_t mcm_gmm_components(const struct McmGmm *gmm);

/**
 * Writes weights (`k`), means (`k × dim`) and covariances (`k × dim × dim`).
 * Any output pointer may be null to skip it.
 *
 * # Safety
 * Non-null outputs must be writable for the lengths above.
 */
enum McmStatus mcm_gmm_get_params(const struct McmGmm *gmm,
                                  double *weights_out,
                                  double *means_out,
                                  double *covariances_out);

/**
 * Log-density at the point `z` of length `dim`.
 *
 * # Safety
 * `z` must hold `dim` values and `out` must be writable.
 */
enum McmStatus mcm_gmm_log_density(const struct McmGmm *gmm,
                                   const double *z,
                                   size_t dim,
                                   double *out);

/**
 * 1-D marginal along `direction` (normalized internally): writes `k`
 * weights, means and variances.
 *
 * # Safety
 * `direction` must hold `dim` values; outputs must hold `k` values each.
 */
enum McmStatus mcm_gmm_marginalize(const struct McmGmm *gmm,
                                   const double *direction,
                                   size_t dim,
                                   double *weights_out,
                                   double *means_out,
                                   double *variances_out);

/**
 * Draws `count` samples with a generator seeded by `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum McmStatus mcm_gmm_sample(const struct McmGmm *gmm,
                              size_t count,
                              uint64_t seed,
                              struct McmSamples **out);

/**
 * Loads a model from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum McmStatus mcm_gmm_load_json(const char *path, struct McmGmm **out);

/**
 * Saves a model as JSON.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum McmStatus mcm_gmm_save_json(const struct McmGmm *gmm, const char *path);

/**
 * Copies `count × dim` row-major values into a new batch.
 *
 * # Safety
 * `data` must hold `count × dim` values; `out` must be writable.
 */
enum McmStatus mcm_samples_new(const double *data,
                               size_t count,
                               size_t dim,
                               struct McmSamples **out);

/**
 * # Safety
 * `samples` must be null or a handle from this library not yet freed.
 */
void mcm_samples_free(struct McmSamples *samples);

/**
 * # Safety
 * `samples` must be null or a live handle.
 */
size_t mcm_samples_count(const struct McmSamples *samples);

/**
 * # Safety
 * `samples` must be null or a live handle.
 */
size_t mcm_samples_dim(const struct McmSamples *samples);

/**
 * Copies the batch into `out`, which must hold `len == count × dim` values.
 *
 * # Safety
 * `out` must be writable for `len` values.
 */
enum McmStatus mcm_samples_copy(const struct McmSamples *samples, double *out, size_t len);

struct McmFitConfig mcm_fit_config_default(void);

/**
 * Fits a mixture to `samples`. When `trace_out` is non-null it receives the
 * loss at each of the `config.steps` steps.
 *
 * # Safety
 * `config` must be readable, `out` writable and `trace_out` null or
 * writable for `config.steps` values.
 */
enum McmStatus mcm_fit_gmm(const struct McmSamples *samples,
                           const struct McmFitConfig *config,
                           struct McmGmm **out,
                           double *trace_out);

/**
 * Moves `count` randomly initialized samples toward `gmm`.
 *
 * # Safety
 * As [`mcm_fit_gmm`].
 */
enum McmStatus mcm_fit_samples(const struct McmGmm *gmm,
                               size_t count,
                               const struct McmFitConfig *config,
                               struct McmSamples **out,
                               double *trace_out);

/**
 * Expectation-maximization baseline. `trace_out`, when non-null, receives
 * the mean log-likelihood after each of the `iterations` updates.
 *
 * # Safety
 * `out` must be writable; `trace_out` null or writable for `iterations`
 * values.
 */
enum McmStatus mcm_em_fit(const struct McmSamples *samples,
                          size_t components,
                          size_t iterations,
                          uint64_t seed,
                          struct McmGmm **out,
                          double *trace_out);

/**
 * Mean and standard error of the sliced KL over `directions` random
 * directions.
 *
 * # Safety
 * `mean_out` and `stderr_out` must be writable.
 */
enum McmStatus mcm_sliced_kl_eval(const struct McmSamples *samples,
                                  const struct McmGmm *gmm,
                                  size_t directions,
                                  double bandwidth,
                                  uint64_t seed,
                                  double *mean_out,
                                  double *stderr_out);

/**
 * Mean per-sample log-density of `samples` under `gmm`.
 *
 * # Safety
 * `out` must be writable.
 */
enum McmStatus mcm_holdout_loglik(const struct McmGmm *gmm,
                                  const struct McmSamples *samples,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCMARG_H */
