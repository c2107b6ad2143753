/* C interface to the qsched quarantine-scheduling library. */

#ifndef QSCHED_H
#define QSCHED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum QschedStatus {
  QschedStatus_Ok = 0,
  QschedStatus_NullPointer = 1,
  QschedStatus_InvalidParams = 2,
  QschedStatus_InvalidSchedule = 3,
  QschedStatus_DomainError = 4,
  QschedStatus_Nonconvergence = 5,
  QschedStatus_BudgetExceeded = 6,
  QschedStatus_InternalInconsistency = 7,
  QschedStatus_OutOfRange = 8,
  QschedStatus_IoError = 9,
  QschedStatus_Panic = 10,
} QschedStatus;

/**
 * Opaque handle to validated epidemic parameters.
 */
typedef struct QschedParams QschedParams;

/**
 * Opaque handle to a recorded trajectory.
 */
typedef struct QschedTrajectory QschedTrajectory;

/**
 * Result of the single-window optimizer, passed by value.
 */
typedef struct QschedOptimalWindow {
  /**
   * Start of the minimizing window.
   */
  double start;
  /**
   * Window length the optimizer was run with.
   */
  double window;
  /**
   * Final epidemic size under that window.
   */
  double r_inf;
  /**
   * Q at the returned start.
   */
  double q_residual;
  /**
   * Time the infectious fraction peaks under the returned schedule.
   */
  double peak_time;
  /**
   * True when the window is characterized by the interior root condition
   * rather than sitting at the origin.
   */
  bool interior_root;
} QschedOptimalWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a parameter handle from raw rates. On success the handle is
 * written to `out` and must be released with `qsched_params_free`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QschedStatus qsched_params_new(double beta_n,
                                    double beta_q,
                                    double gamma,
                                    struct QschedParams **out);

/**
 * Builds a parameter handle from reproduction numbers (`beta = r0 * gamma`).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QschedStatus qsched_params_from_r0(double r0_n,
                                        double r0_q,
                                        double gamma,
                                        struct QschedParams **out);

/**
 * Releases a parameter handle. A null pointer is a no-op.
 *
 * # Safety
 * `params` must come from a `qsched_params_*` constructor.
 */
void qsched_params_free(struct QschedParams *params);

/**
 * Herd-immunity threshold `gamma / beta_n`; NaN on a null handle.
 *
 * # Safety
 * `params` must be valid or null.
 */
double qsched_params_rho_n(const struct QschedParams *params);

/**
 * Quarantine-regime threshold `gamma / beta_q`; NaN on a null handle.
 *
 * # Safety
 * `params` must be valid or null.
 */
double qsched_params_rho_q(const struct QschedParams *params);

/**
 * Limiting susceptible/removed fractions reached from `(s, i)` under the
 * normal transmission rate.
 *
 * # Safety
 * All pointers must be valid.
 */
enum QschedStatus qsched_final_size(const struct QschedParams *params,
                                    double s,
                                    double i,
                                    double *s_inf,
                                    double *r_inf);

/**
 * The integral `Q(s0, i0, T)` along quarantined dynamics, with a
 * quadrature error estimate.
 *
 * # Safety
 * All pointers must be valid.
 */
enum QschedStatus qsched_q_integral(const struct QschedParams *params,
                                    double s0,
                                    double i0,
                                    double window,
                                    double step,
                                    double *value,
                                    double *quadrature_error);

/**
 * Closed-form estimate of the seed level below which the optimal window is
 * interior; requires `beta_n > gamma`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum QschedStatus qsched_epsilon0_estimate(const struct QschedParams *params,
                                           double window,
                                           double *out);

/**
 * Conservative time bound after which the susceptible fraction sits below
 * `rho_n` for every schedule of total length `window`. NaN on a null
 * handle.
 *
 * # Safety
 * `params` must be valid or null.
 */
double qsched_t_star(const struct QschedParams *params, double i0, double window);

/**
 * Locates the contiguous window of length `window` minimizing the final
 * epidemic size from the standard initial data `(1 - i0, i0, 0)`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum QschedStatus qsched_optimal_window(const struct QschedParams *params,
                                        double i0,
                                        double window,
                                        double step,
                                        struct QschedOptimalWindow *out);

/**
 * Final epidemic size under a schedule given as parallel `starts` /
 * `lengths` arrays of `n_intervals` entries (sorted, disjoint).
 *
 * # Safety
 * Array pointers must reference `n_intervals` readable doubles.
 */
enum QschedStatus qsched_r_inf_for_schedule(const struct QschedParams *params,
                                            const double *starts,
                                            const double *lengths,
                                            uintptr_t n_intervals,
                                            double i0,
                                            double step,
                                            double *r_inf);

/**
 * Integrates the schedule-driven system over `[0, horizon]` and returns a
 * trajectory handle to be released with `qsched_trajectory_free`.
 *
 * # Safety
 * Array pointers must reference `n_intervals` readable doubles; `out` must
 * be valid.
 */
enum QschedStatus qsched_simulate(const struct QschedParams *params,
                                  const double *starts,
                                  const double *lengths,
                                  uintptr_t n_intervals,
                                  double i0,
                                  double horizon,
                                  double step,
                                  struct QschedTrajectory **out);

/**
 * Number of recorded states; zero on a null handle.
 *
 * # Safety
 * `trajectory` must be valid or null.
 */
uintptr_t qsched_trajectory_len(const struct QschedTrajectory *trajectory);

/**
 * Copies the state at `index` into the out-pointers.
 *
 * # Safety
 * All pointers must be valid.
 */
enum QschedStatus qsched_trajectory_point(const struct QschedTrajectory *trajectory,
                                          uintptr_t index,
                                          double *t,
                                          double *s,
                                          double *i,
                                          double *r);

/**
 * Releases a trajectory handle. A null pointer is a no-op.
 *
 * # Safety
 * `trajectory` must come from `qsched_simulate`.
 */
void qsched_trajectory_free(struct QschedTrajectory *trajectory);

/**
 * Static description of a status code.
 */
const char *qsched_status_message(enum QschedStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSCHED_H */
