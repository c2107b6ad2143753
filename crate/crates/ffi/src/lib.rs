//! C ABI for the quarantine-scheduling library.
//!
//! Parameters and trajectories cross the boundary as opaque handles; every
//! fallible call returns a [`QschedStatus`] and writes its results through
//! out-pointers. The generated header lives in `include/qsched.h`.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use qsched::analysis;
use qsched::integrator::{self, IntegratorConfig};
use qsched::sir::{self, EpidemicParams, EpidemicState, Schedule};
use qsched::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QschedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    InvalidSchedule = 3,
    DomainError = 4,
    Nonconvergence = 5,
    BudgetExceeded = 6,
    InternalInconsistency = 7,
    OutOfRange = 8,
    IoError = 9,
    Panic = 10,
}

impl From<&Error> for QschedStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParams(_) => QschedStatus::InvalidParams,
            Error::InvalidSchedule(_) => QschedStatus::InvalidSchedule,
            Error::Domain(_) => QschedStatus::DomainError,
            Error::Nonconvergence { .. } => QschedStatus::Nonconvergence,
            Error::BudgetExceeded(_) => QschedStatus::BudgetExceeded,
            Error::Inconsistency(_) => QschedStatus::InternalInconsistency,
            Error::OutOfRange(_) => QschedStatus::OutOfRange,
            Error::Io(_) => QschedStatus::IoError,
        }
    }
}

/// Opaque handle to validated epidemic parameters.
pub struct QschedParams(EpidemicParams);

/// Opaque handle to a recorded trajectory.
pub struct QschedTrajectory(integrator::Trajectory);

/// Result of the single-window optimizer, passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QschedOptimalWindow {
    /// Start of the minimizing window.
    pub start: f64,
    /// Window length the optimizer was run with.
    pub window: f64,
    /// Final epidemic size under that window.
    pub r_inf: f64,
    /// Q at the returned start.
    pub q_residual: f64,
    /// Time the infectious fraction peaks under the returned schedule.
    pub peak_time: f64,
    /// True when the window is characterized by the interior root condition
    /// rather than sitting at the origin.
    pub interior_root: bool,
}

fn guard<F: FnOnce() -> QschedStatus>(f: F) -> QschedStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(QschedStatus::Panic)
}

fn config_with_step(step: f64) -> IntegratorConfig {
    IntegratorConfig {
        step,
        ..IntegratorConfig::default()
    }
}

unsafe fn schedule_from_raw(
    starts: *const f64,
    lengths: *const f64,
    n_intervals: usize,
) -> Result<Schedule, QschedStatus> {
    if n_intervals > 0 && (starts.is_null() || lengths.is_null()) {
        return Err(QschedStatus::NullPointer);
    }
    let starts = if n_intervals == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(starts, n_intervals)
    };
    let lengths = if n_intervals == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(lengths, n_intervals)
    };
    Schedule::new(
        starts
            .iter()
            .copied()
            .zip(lengths.iter().copied())
            .collect(),
    )
    .map_err(|e| QschedStatus::from(&e))
}

/// Builds a parameter handle from raw rates. On success the handle is
/// written to `out` and must be released with `qsched_params_free`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsched_params_new(
    beta_n: f64,
    beta_q: f64,
    gamma: f64,
    out: *mut *mut QschedParams,
) -> QschedStatus {
    guard(|| {
        if out.is_null() {
            return QschedStatus::NullPointer;
        }
        match EpidemicParams::new(beta_n, beta_q, gamma) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(QschedParams(p)));
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Builds a parameter handle from reproduction numbers (`beta = r0 * gamma`).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsched_params_from_r0(
    r0_n: f64,
    r0_q: f64,
    gamma: f64,
    out: *mut *mut QschedParams,
) -> QschedStatus {
    guard(|| {
        if out.is_null() {
            return QschedStatus::NullPointer;
        }
        match EpidemicParams::from_r0(r0_n, r0_q, gamma) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(QschedParams(p)));
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Releases a parameter handle. A null pointer is a no-op.
///
/// # Safety
/// `params` must come from a `qsched_params_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn qsched_params_free(params: *mut QschedParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Herd-immunity threshold `gamma / beta_n`; NaN on a null handle.
///
/// # Safety
/// `params` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qsched_params_rho_n(params: *const QschedParams) -> f64 {
    match params.as_ref() {
        Some(p) => p.0.rho_n(),
        None => f64::NAN,
    }
}

/// Quarantine-regime threshold `gamma / beta_q`; NaN on a null handle.
///
/// # Safety
/// `params` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qsched_params_rho_q(params: *const QschedParams) -> f64 {
    match params.as_ref() {
        Some(p) => p.0.rho_q(),
        None => f64::NAN,
    }
}

/// Limiting susceptible/removed fractions reached from `(s, i)` under the
/// normal transmission rate.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_final_size(
    params: *const QschedParams,
    s: f64,
    i: f64,
    s_inf: *mut f64,
    r_inf: *mut f64,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if s_inf.is_null() || r_inf.is_null() {
            return QschedStatus::NullPointer;
        }
        let state = EpidemicState {
            t: 0.0,
            s,
            i,
            r: 1.0 - s - i,
        };
        match sir::final_size(&state, &p.0) {
            Ok(fs) => {
                *s_inf = fs.s_inf;
                *r_inf = fs.r_inf;
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// The integral `Q(s0, i0, T)` along quarantined dynamics, with a
/// quadrature error estimate.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_q_integral(
    params: *const QschedParams,
    s0: f64,
    i0: f64,
    window: f64,
    step: f64,
    value: *mut f64,
    quadrature_error: *mut f64,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if value.is_null() || quadrature_error.is_null() {
            return QschedStatus::NullPointer;
        }
        match analysis::q_integral(s0, i0, window, &p.0, &config_with_step(step)) {
            Ok(q) => {
                *value = q.value;
                *quadrature_error = q.quadrature_error;
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Closed-form estimate of the seed level below which the optimal window is
/// interior; requires `beta_n > gamma`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_epsilon0_estimate(
    params: *const QschedParams,
    window: f64,
    out: *mut f64,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if out.is_null() {
            return QschedStatus::NullPointer;
        }
        match analysis::epsilon0_estimate(&p.0, window) {
            Ok(eps) => {
                *out = eps;
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Conservative time bound after which the susceptible fraction sits below
/// `rho_n` for every schedule of total length `window`. NaN on a null
/// handle.
///
/// # Safety
/// `params` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qsched_t_star(params: *const QschedParams, i0: f64, window: f64) -> f64 {
    match params.as_ref() {
        Some(p) => analysis::t_star(&p.0, i0, window),
        None => f64::NAN,
    }
}

/// Locates the contiguous window of length `window` minimizing the final
/// epidemic size from the standard initial data `(1 - i0, i0, 0)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_optimal_window(
    params: *const QschedParams,
    i0: f64,
    window: f64,
    step: f64,
    out: *mut QschedOptimalWindow,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if out.is_null() {
            return QschedStatus::NullPointer;
        }
        match analysis::optimal_window(&p.0, i0, window, &config_with_step(step)) {
            Ok(w) => {
                *out = QschedOptimalWindow {
                    start: w.start,
                    window: w.window,
                    r_inf: w.r_inf,
                    q_residual: w.q_residual,
                    peak_time: w.peak_time,
                    interior_root: w.case == analysis::WindowCase::InteriorRoot,
                };
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Final epidemic size under a schedule given as parallel `starts` /
/// `lengths` arrays of `n_intervals` entries (sorted, disjoint).
///
/// # Safety
/// Array pointers must reference `n_intervals` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qsched_r_inf_for_schedule(
    params: *const QschedParams,
    starts: *const f64,
    lengths: *const f64,
    n_intervals: usize,
    i0: f64,
    step: f64,
    r_inf: *mut f64,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if r_inf.is_null() {
            return QschedStatus::NullPointer;
        }
        let schedule = match schedule_from_raw(starts, lengths, n_intervals) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let initial = match EpidemicState::initial(i0) {
            Ok(s) => s,
            Err(e) => return QschedStatus::from(&e),
        };
        match integrator::r_inf_for_schedule(&p.0, &schedule, &initial, &config_with_step(step)) {
            Ok(fs) => {
                *r_inf = fs.r_inf;
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Integrates the schedule-driven system over `[0, horizon]` and returns a
/// trajectory handle to be released with `qsched_trajectory_free`.
///
/// # Safety
/// Array pointers must reference `n_intervals` readable doubles; `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_simulate(
    params: *const QschedParams,
    starts: *const f64,
    lengths: *const f64,
    n_intervals: usize,
    i0: f64,
    horizon: f64,
    step: f64,
    out: *mut *mut QschedTrajectory,
) -> QschedStatus {
    guard(|| {
        let Some(p) = params.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if out.is_null() {
            return QschedStatus::NullPointer;
        }
        let schedule = match schedule_from_raw(starts, lengths, n_intervals) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let initial = match EpidemicState::initial(i0) {
            Ok(s) => s,
            Err(e) => return QschedStatus::from(&e),
        };
        match integrator::integrate(&p.0, &schedule, &initial, horizon, &config_with_step(step)) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(QschedTrajectory(traj)));
                QschedStatus::Ok
            }
            Err(e) => QschedStatus::from(&e),
        }
    })
}

/// Number of recorded states; zero on a null handle.
///
/// # Safety
/// `trajectory` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qsched_trajectory_len(trajectory: *const QschedTrajectory) -> usize {
    match trajectory.as_ref() {
        Some(t) => t.0.points().len(),
        None => 0,
    }
}

/// Copies the state at `index` into the out-pointers.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qsched_trajectory_point(
    trajectory: *const QschedTrajectory,
    index: usize,
    t: *mut f64,
    s: *mut f64,
    i: *mut f64,
    r: *mut f64,
) -> QschedStatus {
    guard(|| {
        let Some(traj) = trajectory.as_ref() else {
            return QschedStatus::NullPointer;
        };
        if t.is_null() || s.is_null() || i.is_null() || r.is_null() {
            return QschedStatus::NullPointer;
        }
        let Some(p) = traj.0.points().get(index) else {
            return QschedStatus::OutOfRange;
        };
        *t = p.t;
        *s = p.s;
        *i = p.i;
        *r = p.r;
        QschedStatus::Ok
    })
}

/// Releases a trajectory handle. A null pointer is a no-op.
///
/// # Safety
/// `trajectory` must come from `qsched_simulate`.
#[no_mangle]
pub unsafe extern "C" fn qsched_trajectory_free(trajectory: *mut QschedTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qsched_status_message(status: QschedStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        QschedStatus::Ok => b"ok\0",
        QschedStatus::NullPointer => b"null pointer argument\0",
        QschedStatus::InvalidParams => b"invalid parameters\0",
        QschedStatus::InvalidSchedule => b"invalid schedule\0",
        QschedStatus::DomainError => b"domain error\0",
        QschedStatus::Nonconvergence => b"solver did not converge\0",
        QschedStatus::BudgetExceeded => b"enumeration budget exceeded\0",
        QschedStatus::InternalInconsistency => b"internal inconsistency\0",
        QschedStatus::OutOfRange => b"argument out of range\0",
        QschedStatus::IoError => b"i/o error\0",
        QschedStatus::Panic => b"internal panic\0",
    };
    msg.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    unsafe fn headline() -> *mut QschedParams {
        let mut p: *mut QschedParams = ptr::null_mut();
        let status = qsched_params_from_r0(2.1, 0.8, 1.0 / 14.0, &mut p);
        assert_eq!(status, QschedStatus::Ok);
        p
    }

    #[test]
    fn params_lifecycle_and_validation() {
        unsafe {
            let p = headline();
            assert!((qsched_params_rho_n(p) - 1.0 / 2.1).abs() < 1e-15);
            assert!((qsched_params_rho_q(p) - 1.0 / 0.8).abs() < 1e-12);
            qsched_params_free(p);

            let mut bad: *mut QschedParams = ptr::null_mut();
            assert_eq!(
                qsched_params_new(0.1, 0.2, 0.05, &mut bad),
                QschedStatus::InvalidParams
            );
            assert!(bad.is_null());
            assert_eq!(
                qsched_params_new(0.2, 0.1, 0.05, ptr::null_mut()),
                QschedStatus::NullPointer
            );
            assert!(qsched_params_rho_n(ptr::null()).is_nan());
        }
    }

    #[test]
    fn final_size_through_the_boundary() {
        unsafe {
            let p = headline();
            let (mut s_inf, mut r_inf) = (0.0, 0.0);
            let status = qsched_final_size(p, 0.9999, 1e-4, &mut s_inf, &mut r_inf);
            assert_eq!(status, QschedStatus::Ok);
            assert!((r_inf - 0.82).abs() < 0.01, "r_inf = {r_inf}");
            assert_eq!(r_inf, 1.0 - s_inf);

            // i = 0 below threshold: identity
            let status = qsched_final_size(p, 0.3, 0.0, &mut s_inf, &mut r_inf);
            assert_eq!(status, QschedStatus::Ok);
            assert_eq!(s_inf, 0.3);

            // domain error on s <= 0
            let status = qsched_final_size(p, 0.0, 0.1, &mut s_inf, &mut r_inf);
            assert_eq!(status, QschedStatus::DomainError);
            qsched_params_free(p);
        }
    }

    #[test]
    fn optimal_window_matches_the_library() {
        unsafe {
            let p = headline();
            let mut w = QschedOptimalWindow {
                start: 0.0,
                window: 0.0,
                r_inf: 0.0,
                q_residual: 0.0,
                peak_time: 0.0,
                interior_root: false,
            };
            let status = qsched_optimal_window(p, 1e-4, 30.0, 0.01, &mut w);
            assert_eq!(status, QschedStatus::Ok);
            assert!(w.interior_root);
            assert!((w.r_inf - 0.70).abs() < 0.01, "r_inf = {}", w.r_inf);

            let native = analysis::optimal_window(
                &EpidemicParams::from_r0(2.1, 0.8, 1.0 / 14.0).unwrap(),
                1e-4,
                30.0,
                &IntegratorConfig::default(),
            )
            .unwrap();
            assert_eq!(w.start, native.start);
            assert_eq!(w.r_inf, native.r_inf);
            qsched_params_free(p);
        }
    }

    #[test]
    fn schedule_runs_and_trajectories() {
        unsafe {
            let p = headline();
            let starts = [40.0, 80.0];
            let lengths = [15.0, 15.0];
            let mut r_inf = 0.0;
            let status = qsched_r_inf_for_schedule(
                p,
                starts.as_ptr(),
                lengths.as_ptr(),
                2,
                1e-4,
                0.05,
                &mut r_inf,
            );
            assert_eq!(status, QschedStatus::Ok);
            assert!(r_inf > 0.0 && r_inf < 1.0);

            // overlapping intervals are rejected
            let bad_starts = [40.0, 45.0];
            let status = qsched_r_inf_for_schedule(
                p,
                bad_starts.as_ptr(),
                lengths.as_ptr(),
                2,
                1e-4,
                0.05,
                &mut r_inf,
            );
            assert_eq!(status, QschedStatus::InvalidSchedule);

            let mut traj: *mut QschedTrajectory = ptr::null_mut();
            let status = qsched_simulate(
                p,
                starts.as_ptr(),
                lengths.as_ptr(),
                2,
                1e-4,
                200.0,
                0.05,
                &mut traj,
            );
            assert_eq!(status, QschedStatus::Ok);
            let len = qsched_trajectory_len(traj);
            assert!(len > 4000, "len = {len}");
            let (mut t, mut s, mut i, mut r) = (0.0, 0.0, 0.0, 0.0);
            assert_eq!(
                qsched_trajectory_point(traj, 0, &mut t, &mut s, &mut i, &mut r),
                QschedStatus::Ok
            );
            assert_eq!((t, s, i, r), (0.0, 0.9999, 1e-4, 0.0));
            assert_eq!(
                qsched_trajectory_point(traj, len, &mut t, &mut s, &mut i, &mut r),
                QschedStatus::OutOfRange
            );
            qsched_trajectory_free(traj);
            qsched_params_free(p);
        }
    }

    #[test]
    fn empty_schedule_accepts_null_arrays() {
        unsafe {
            let p = headline();
            let mut r_inf = 0.0;
            let status =
                qsched_r_inf_for_schedule(p, ptr::null(), ptr::null(), 0, 1e-4, 0.05, &mut r_inf);
            assert_eq!(status, QschedStatus::Ok);
            assert!((r_inf - 0.82).abs() < 0.01, "r_inf = {r_inf}");
            qsched_params_free(p);
        }
    }

    #[test]
    fn bounds_and_integrals() {
        unsafe {
            let p = headline();
            let mut eps = 0.0;
            assert_eq!(
                qsched_epsilon0_estimate(p, 30.0, &mut eps),
                QschedStatus::Ok
            );
            assert!((eps - 0.3056).abs() < 1e-4);
            assert!(qsched_t_star(p, 1e-4, 30.0) > 6e4);

            let (mut q, mut q_err) = (0.0, 0.0);
            assert_eq!(
                qsched_q_integral(p, 0.9999, 1e-4, 30.0, 0.01, &mut q, &mut q_err),
                QschedStatus::Ok
            );
            assert!(q < 0.0, "Q at the origin should be negative, got {q}");
            assert_eq!(
                qsched_q_integral(p, 0.9, 0.0, 30.0, 0.01, &mut q, &mut q_err),
                QschedStatus::DomainError
            );
            qsched_params_free(p);
        }
    }

    #[test]
    fn status_messages_are_c_strings() {
        for status in [
            QschedStatus::Ok,
            QschedStatus::NullPointer,
            QschedStatus::Nonconvergence,
            QschedStatus::Panic,
        ] {
            let ptr = qsched_status_message(status);
            let text = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
            assert!(!text.is_empty());
        }
    }
}
