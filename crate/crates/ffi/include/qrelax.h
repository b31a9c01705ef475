/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef QRELAX_H
#define QRELAX_H

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum QrStatus {
  QR_STATUS_OK = 0,
  QR_STATUS_NULL_POINTER = 1,
  QR_STATUS_DOMAIN = 2,
  QR_STATUS_INVALID_CONFIG = 3,
  QR_STATUS_EMPTY_ROW = 4,
  QR_STATUS_DEGENERATE_LEVELS = 5,
  QR_STATUS_NOT_REAL = 6,
  QR_STATUS_GRID_MISMATCH = 7,
  QR_STATUS_NOT_NORMALISED = 8,
  QR_STATUS_WRONG_MODE = 9,
  QR_STATUS_IO = 10,
  QR_STATUS_BUFFER_TOO_SMALL = 11,
  QR_STATUS_PANIC = 12,
} QrStatus;

// Per-time series of a trajectory.
typedef enum QrSeries {
  QR_SERIES_TIME = 0,
  QR_SERIES_BROWNIAN = 1,
  QR_SERIES_INFORMATION = 2,
  QR_SERIES_ENERGY = 3,
  QR_SERIES_VARIANCE = 4,
  QR_SERIES_INNOVATIONS = 5,
} QrSeries;

typedef struct QrEnsemble QrEnsemble;

// Energy spectrum and quench prior of an expanded well in dimensionless
// units.
typedef struct QrModel QrModel;

typedef struct QrTrajectory QrTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `cap`). Returns the untruncated length without the NUL.
//
// # Safety
// `buf` must be NULL or valid for `cap` bytes.
size_t qr_last_error_message(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *qr_version(void);

// Probability of landing in level `m` of the expanded well from level `n`.
//
// # Safety
// `out_p` must be valid for writes.
enum QrStatus qr_transition_probability(size_t n, size_t m, double alpha, double *out_p);

// Standard normal CDF.
double qr_normal_cdf(double x);

// # Safety
// `out_x` must be valid for writes.
enum QrStatus qr_inverse_normal_cdf(double p, double *out_x);

// Relaxation time for terminal level `j`.
//
// # Safety
// `out_tau` must be valid for writes.
enum QrStatus qr_tau_r(double alpha,
                       double sigma,
                       size_t j,
                       double lambda,
                       double confidence,
                       double *out_tau);

// New dimensionless model of a well expanded by `alpha`, truncated at
// `truncation` levels.
//
// # Safety
// `out_model` must be valid for writes.
enum QrStatus qr_model_new(double alpha, size_t truncation, struct QrModel **out_model);

// # Safety
// `model` must be NULL or a handle from [`qr_model_new`] not yet freed.
void qr_model_free(struct QrModel *model);

// Energies `E_1..E_N` of the expanded well.
//
// # Safety
// `model` must be a live handle; `buf` NULL or valid for `cap` values;
// `len_out` NULL or valid for writes.
enum QrStatus qr_model_energies(const struct QrModel *model,
                                double *buf,
                                size_t cap,
                                size_t *len_out);

// Normalised quench prior from level `n` over the truncation.
//
// # Safety
// As for [`qr_model_energies`].
enum QrStatus qr_model_prior(const struct QrModel *model,
                             size_t n,
                             double *buf,
                             size_t cap,
                             size_t *len_out);

// Simulate trajectory `index` of stream `seed` from level `n` on a uniform
// grid of `steps` intervals up to `t_end`. `outcome` 0 samples the
// terminal level; otherwise the run is conditioned on that level.
//
// # Safety
// `model` must be a live handle; `out_traj` valid for writes.
enum QrStatus qr_trajectory_simulate(const struct QrModel *model,
                                     size_t n,
                                     double sigma,
                                     double t_end,
                                     size_t steps,
                                     uint64_t seed,
                                     uint64_t index,
                                     size_t outcome,
                                     struct QrTrajectory **out_traj);

// # Safety
// `traj` must be NULL or a live handle.
void qr_trajectory_free(struct QrTrajectory *traj);

// Number of grid points, or 0 for NULL.
//
// # Safety
// `traj` must be NULL or a live handle.
size_t qr_trajectory_len(const struct QrTrajectory *traj);

// Terminal level (1-based), or 0 for NULL.
//
// # Safety
// `traj` must be NULL or a live handle.
size_t qr_trajectory_outcome(const struct QrTrajectory *traj);

// Copy one series of the trajectory.
//
// # Safety
// `traj` must be a live handle; `buf` NULL or valid for `cap` values;
// `len_out` NULL or valid for writes.
enum QrStatus qr_trajectory_series(const struct QrTrajectory *traj,
                                   enum QrSeries series,
                                   double *buf,
                                   size_t cap,
                                   size_t *len_out);

// Posterior over levels at grid point `k`.
//
// # Safety
// As for [`qr_trajectory_series`].
enum QrStatus qr_trajectory_posterior(const struct QrTrajectory *traj,
                                      size_t k,
                                      double *buf,
                                      size_t cap,
                                      size_t *len_out);

// Run `runs` sampled trajectories from level `n` on the default checkpoint
// grid. `threads` 0 lets the library choose; results do not depend on it.
//
// # Safety
// `model` must be a live handle; `out_ens` valid for writes.
enum QrStatus qr_ensemble_run(const struct QrModel *model,
                              size_t n,
                              double sigma,
                              size_t runs,
                              uint64_t seed,
                              size_t threads,
                              struct QrEnsemble **out_ens);

// # Safety
// `ens` must be NULL or a live handle.
void qr_ensemble_free(struct QrEnsemble *ens);

// Checkpoint times, mean energy and its standard error. Each buffer holds
// `cap` values; any of them may be NULL to skip it.
//
// # Safety
// `ens` must be a live handle; non-NULL buffers valid for `cap` values;
// `len_out` NULL or valid for writes.
enum QrStatus qr_ensemble_mean_energy(const struct QrEnsemble *ens,
                                      double *times,
                                      double *mean,
                                      double *se,
                                      size_t cap,
                                      size_t *len_out);

// Number of runs that ended in each level.
//
// # Safety
// As for [`qr_model_energies`].
enum QrStatus qr_ensemble_outcome_counts(const struct QrEnsemble *ens,
                                         size_t *buf,
                                         size_t cap,
                                         size_t *len_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QRELAX_H */
