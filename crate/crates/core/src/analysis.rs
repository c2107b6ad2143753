//! The window-placement apparatus: the Q integral, the single-window
//! optimizer, closed-form bounds, and executable checks of the structural
//! facts the optimizer relies on.
//!
//! The central object is
//!
//! ```text
//! Q(s0, i0, T) = ∫_0^T (gamma - beta_n * S_q(t)) / I_q(t) dt,
//! ```
//!
//! where `(S_q, I_q)` evolve under the reduced rate `beta_q` from
//! `(s0, i0)`. A contiguous window `[t0, t0 + T]` is stationary for the
//! final epidemic size exactly when Q vanishes at its start state, so the
//! optimizer either returns `[0, T]` (when Q at the origin is already
//! nonnegative) or hunts down the zeros of `t0 -> Q(S(t0), I(t0), T)` along
//! the unquarantined flow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{advance, integrate_to_extinction, r_inf_for_schedule, IntegratorConfig};
use crate::sir::{final_size, EpidemicParams, EpidemicState, Schedule, SIMPLEX_TOL};

/// Bisection tolerance on the Q value when refining window roots. Q enters
/// the final size only at first order with a small prefactor, so anything
/// below this is unobservable in R(inf).
const PHI_TOL: f64 = 1e-8;

/// Relative margin on the herd-immunity threshold used to truncate searches:
/// once `s < rho_n * (1 - CROSSING_MARGIN)` and Q is positive, later windows
/// only lose ground.
const CROSSING_MARGIN: f64 = 1e-6;

/// A quadrature value with a Richardson-style error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QResult {
    pub value: f64,
    pub quadrature_error: f64,
}

/// Composite Simpson rule on a uniform grid with an even interval count.
fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n.is_multiple_of(2));
    let mut acc = values[0] + values[n];
    let mut k = 1;
    while k < n {
        acc += 4.0 * values[k];
        if k + 1 < n {
            acc += 2.0 * values[k + 1];
        }
        k += 2;
    }
    acc * h / 3.0
}

/// Simpson value plus the |fine - coarse| / 15 error estimate obtained by
/// re-evaluating on every other node.
fn simpson_with_error(values: &[f64], h: f64) -> QResult {
    let fine = simpson(values, h);
    let coarse_nodes: Vec<f64> = values.iter().copied().step_by(2).collect();
    let coarse = simpson(&coarse_nodes, 2.0 * h);
    QResult {
        value: fine,
        quadrature_error: (fine - coarse).abs() / 15.0,
    }
}

/// Quarantined window pass: end state plus the two quadratures every check
/// needs, accumulated on the RK4 grid.
pub(crate) struct WindowProfile {
    pub s_end: f64,
    pub i_end: f64,
    /// ∫ (gamma - beta_n * S_q) / I_q dt over the window.
    pub q: QResult,
    /// ∫ dt / I_q over the window.
    pub inv_i: QResult,
}

pub(crate) fn window_profile(
    s0: f64,
    i0: f64,
    window: f64,
    params: &EpidemicParams,
    config: &IntegratorConfig,
) -> Result<WindowProfile> {
    if i0 <= 0.0 {
        return Err(Error::domain(format!(
            "the window integrand is undefined for i0 = {i0}"
        )));
    }
    if !(s0 > 0.0 && s0 < 1.0) || s0 + i0 > 1.0 + SIMPLEX_TOL {
        return Err(Error::domain(format!(
            "window start state must satisfy s0 in (0,1), s0 + i0 <= 1, got s0={s0}, i0={i0}"
        )));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::domain(format!(
            "window length must be positive, got {window}"
        )));
    }
    // Node count divisible by 4 so the half-resolution Simpson pass is valid.
    let n = ((window / config.step).ceil() as usize).max(4).div_ceil(4) * 4;
    let h = window / n as f64;
    let beta_n = params.beta_n();
    let beta_q = params.beta_q();
    let gamma = params.gamma();

    let mut q_nodes = Vec::with_capacity(n + 1);
    let mut inv_nodes = Vec::with_capacity(n + 1);
    let (mut s, mut i) = (s0, i0);
    q_nodes.push((gamma - beta_n * s) / i);
    inv_nodes.push(1.0 / i);
    for _ in 0..n {
        let (s2, i2, _) = crate::integrator::rk4_step(s, i, 0.0, beta_q, gamma, h);
        s = s2;
        i = i2;
        if i <= 0.0 {
            return Err(Error::domain(
                "infectious fraction vanished inside the window",
            ));
        }
        q_nodes.push((gamma - beta_n * s) / i);
        inv_nodes.push(1.0 / i);
    }

    Ok(WindowProfile {
        s_end: s,
        i_end: i,
        q: simpson_with_error(&q_nodes, h),
        inv_i: simpson_with_error(&inv_nodes, h),
    })
}

/// The integral `Q(s0, i0, T)` along the quarantined dynamics started at
/// `(s0, i0)`, with a quadrature error estimate. The sign of `value` is
/// trustworthy once `|value| > 10 * quadrature_error`.
pub fn q_integral(
    s0: f64,
    i0: f64,
    window: f64,
    params: &EpidemicParams,
    config: &IntegratorConfig,
) -> Result<QResult> {
    config.validate()?;
    Ok(window_profile(s0, i0, window, params, config)?.q)
}

/// Closed-form estimate of the initial-infection level below which the
/// optimal window is interior.
pub fn epsilon0_estimate(params: &EpidemicParams, window: f64) -> Result<f64> {
    if params.beta_n() <= params.gamma() {
        return Err(Error::domain(
            "epsilon0 is meaningful only for beta_n > gamma; below that the \
             origin window is always optimal",
        ));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::domain(format!(
            "window length must be positive, got {window}"
        )));
    }
    let growth = ((params.beta_q() - params.gamma()) * window).exp().max(1.0);
    Ok((1.0 - params.gamma() / params.beta_n()) / (params.beta_q() * window * growth))
}

/// Closed-form time bound after which the susceptible fraction sits below
/// `rho_n` for every schedule of total length `window`. Deliberately
/// conservative; searches truncate much earlier on the observed crossing.
///
/// While `s >= rho_n` the infectious fraction cannot fall below
/// `i0 * exp(-gamma * window)`, so `s` decays at least exponentially at rate
/// `beta_q * i0 * exp(-gamma * window)` and must cross within the returned
/// time.
pub fn t_star(params: &EpidemicParams, i0: f64, window: f64) -> f64 {
    if params.beta_n() * (1.0 - i0) <= params.gamma() {
        return 0.0;
    }
    (params.gamma() * window).exp() / (params.beta_q() * i0)
        * (params.beta_n() * (1.0 - i0) / params.gamma()).ln()
}

/// The two closed-form bounds bundled for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    /// Present only when `beta_n > gamma`.
    pub epsilon0: Option<f64>,
    pub t_star: f64,
}

impl Bounds {
    pub fn for_params(params: &EpidemicParams, i0: f64, window: f64) -> Self {
        Self {
            epsilon0: epsilon0_estimate(params, window).ok(),
            t_star: t_star(params, i0, window),
        }
    }
}

/// Which branch of the optimizer dichotomy produced the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowCase {
    AtOrigin,
    InteriorRoot,
}

/// A refined zero of `t0 -> Q` together with its window value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootCandidate {
    pub t0: f64,
    pub q_residual: f64,
    pub r_inf: f64,
}

/// Result of the single-window optimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalWindow {
    /// Start of the minimizing window `[start, start + window]`.
    pub start: f64,
    pub case: WindowCase,
    /// Window length `T` the optimizer was run with.
    pub window: f64,
    /// Final epidemic size under the returned window.
    pub r_inf: f64,
    /// Q at the returned start; at most the solver tolerance for interior
    /// roots.
    pub q_residual: f64,
    /// Time of the infection peak under the returned schedule.
    pub peak_time: f64,
    /// Every refined zero of Q, whether or not it won the argmin.
    pub roots: Vec<RootCandidate>,
}

impl OptimalWindow {
    /// The minimizing window as a schedule.
    pub fn schedule(&self) -> Schedule {
        Schedule::contiguous(self.start, self.window).expect("optimizer window is valid")
    }
}

/// Grid node along the unquarantined flow.
struct FlowNode {
    t: f64,
    s: f64,
    i: f64,
    r: f64,
}

/// Advances a flow node under the normal rate.
fn normal_hop(
    node: &FlowNode,
    t: f64,
    params: &EpidemicParams,
    config: &IntegratorConfig,
) -> FlowNode {
    let (s, i, r) = advance(
        node.s,
        node.i,
        node.r,
        params.beta_n(),
        params.gamma(),
        t - node.t,
        config.step,
    );
    FlowNode { t, s, i, r }
}

/// Locates the window `[t0, t0 + T]` minimizing the final epidemic size.
///
/// If Q at the origin is already nonnegative the origin window is returned.
/// Otherwise every sign change of `t0 -> Q` on a `T/100` grid is refined by
/// bisection to `|Q| <= 1e-8`, the best of all roots (plus the origin) wins,
/// and a coarse `T/30` scan of actual window values cross-checks that the
/// returned window is the global minimum within scan resolution.
pub fn optimal_window(
    params: &EpidemicParams,
    i0: f64,
    window: f64,
    config: &IntegratorConfig,
) -> Result<OptimalWindow> {
    config.validate()?;
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid_params(format!(
            "window length must be positive, got {window}"
        )));
    }
    let initial = EpidemicState::initial(i0)?;
    let rho_trunc = params.rho_n() * (1.0 - CROSSING_MARGIN);
    let t_hard = t_star(params, i0, window) + window;

    let origin_profile = window_profile(initial.s, initial.i, window, params, config)?;
    let phi0 = origin_profile.q.value;

    let mut roots: Vec<RootCandidate> = Vec::new();
    let scan_limit;

    if phi0 < 0.0 {
        // March the unquarantined flow on a T/100 grid, recording Q at each
        // node, until the flow has crossed rho_n and Q has turned positive
        // (or the hard bound is hit).
        let dt = window / 100.0;
        let mut nodes: Vec<(FlowNode, f64)> = Vec::new();
        nodes.push((
            FlowNode {
                t: 0.0,
                s: initial.s,
                i: initial.i,
                r: initial.r,
            },
            phi0,
        ));
        loop {
            let (prev, _) = nodes.last().unwrap();
            if prev.t >= t_hard {
                break;
            }
            let t = nodes.len() as f64 * dt;
            let node = normal_hop(prev, t, params, config);
            let profile = window_profile(node.s, node.i, window, params, config)?;
            let phi = profile.q.value;
            let done = node.s < rho_trunc && phi > 0.0;
            nodes.push((node, phi));
            if done {
                break;
            }
        }
        scan_limit = nodes.last().unwrap().0.t;

        let mut brackets = Vec::new();
        for k in 0..nodes.len() - 1 {
            let (ref a, phi_a) = nodes[k];
            let (_, phi_b) = nodes[k + 1];
            if phi_a == 0.0 {
                roots.push(root_candidate(a.t, phi_a, a, 0.0, params, window, config)?);
            } else if phi_a * phi_b < 0.0 {
                brackets.push(k);
            }
        }
        if brackets.is_empty() && roots.is_empty() {
            return Err(Error::Inconsistency(format!(
                "Q is negative at the origin but no sign change was found up \
                 to t = {scan_limit}; the tail of the flow should force Q > 0"
            )));
        }
        for k in brackets {
            let (ref a, phi_a) = nodes[k];
            let (ref b, phi_b) = nodes[k + 1];
            let (t_root, phi_root) = bisect_phi(a, phi_a, b.t, phi_b, params, window, config)?;
            roots.push(root_candidate(
                t_root,
                phi_root,
                a,
                t_root - a.t,
                params,
                window,
                config,
            )?);
        }
    } else {
        // Origin window case: still work out how far the confirmation scan
        // should look by finding the rho_n crossing of the plain flow.
        let dt = window / 100.0;
        let mut node = FlowNode {
            t: 0.0,
            s: initial.s,
            i: initial.i,
            r: initial.r,
        };
        while node.s >= rho_trunc && node.t < t_hard {
            let t = node.t + dt;
            node = normal_hop(&node, t, params, config);
        }
        scan_limit = node.t;
    }

    // Candidates: the origin plus every refined root; smallest r_inf wins,
    // ties to the earlier start.
    let origin_r_inf = final_size(
        &EpidemicState {
            t: window,
            s: origin_profile.s_end,
            i: origin_profile.i_end,
            r: 1.0 - origin_profile.s_end - origin_profile.i_end,
        },
        params,
    )?
    .r_inf;
    let mut best = RootCandidate {
        t0: 0.0,
        q_residual: phi0,
        r_inf: origin_r_inf,
    };
    for root in &roots {
        if root.r_inf < best.r_inf || (root.r_inf == best.r_inf && root.t0 < best.t0) {
            best = *root;
        }
    }

    let schedule = Schedule::contiguous(best.t0, window)
        .expect("candidate start is nonnegative by construction");
    let (trajectory, fs) = integrate_to_extinction(params, &schedule, &initial, config)?;

    let result = OptimalWindow {
        start: best.t0,
        case: if best.t0 == 0.0 {
            WindowCase::AtOrigin
        } else {
            WindowCase::InteriorRoot
        },
        window,
        r_inf: fs.r_inf,
        q_residual: best.q_residual,
        peak_time: trajectory.peak().t,
        roots,
    };

    confirm_with_scan(&result, params, &initial, scan_limit, config)?;
    Ok(result)
}

/// Window value for a candidate start reached by advancing `gap` days of
/// normal flow from `anchor`.
fn root_candidate(
    t0: f64,
    q_residual: f64,
    anchor: &FlowNode,
    gap: f64,
    params: &EpidemicParams,
    window: f64,
    config: &IntegratorConfig,
) -> Result<RootCandidate> {
    let (s, i, _r) = advance(
        anchor.s,
        anchor.i,
        anchor.r,
        params.beta_n(),
        params.gamma(),
        gap,
        config.step,
    );
    let profile = window_profile(s, i, window, params, config)?;
    let r_inf = final_size(
        &EpidemicState {
            t: t0 + window,
            s: profile.s_end,
            i: profile.i_end,
            r: 1.0 - profile.s_end - profile.i_end,
        },
        params,
    )?
    .r_inf;
    Ok(RootCandidate {
        t0,
        q_residual,
        r_inf,
    })
}

/// Bisects a sign change of Q between `anchor.t` and `t_hi`.
fn bisect_phi(
    anchor: &FlowNode,
    phi_lo: f64,
    t_hi: f64,
    phi_hi: f64,
    params: &EpidemicParams,
    window: f64,
    config: &IntegratorConfig,
) -> Result<(f64, f64)> {
    debug_assert!(phi_lo * phi_hi < 0.0);
    let mut lo = anchor.t;
    let mut hi = t_hi;
    let sign_lo = phi_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (s, i, _r) = advance(
            anchor.s,
            anchor.i,
            anchor.r,
            params.beta_n(),
            params.gamma(),
            mid - anchor.t,
            config.step,
        );
        let phi = window_profile(s, i, window, params, config)?.q.value;
        if phi.abs() <= PHI_TOL {
            return Ok((mid, phi));
        }
        if phi.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            if phi.abs() <= PHI_TOL {
                return Ok((mid, phi));
            }
            return Err(Error::nonconvergence(
                "window-root bisection stalled before reaching tolerance",
                phi,
            ));
        }
    }
    Err(Error::nonconvergence(
        "window-root bisection exhausted its iteration budget",
        f64::NAN,
    ))
}

/// Coarse scan of actual window values confirming the returned window is the
/// global minimum within scan resolution.
fn confirm_with_scan(
    result: &OptimalWindow,
    params: &EpidemicParams,
    initial: &EpidemicState,
    scan_limit: f64,
    config: &IntegratorConfig,
) -> Result<()> {
    const SCAN_RESOLUTION: f64 = 1e-4;
    let dt = result.window / 30.0;
    let mut node = FlowNode {
        t: 0.0,
        s: initial.s,
        i: initial.i,
        r: initial.r,
    };
    let mut scan_min = f64::INFINITY;
    let mut scan_argmin = 0.0;
    loop {
        let (s, i, _) = advance(
            node.s,
            node.i,
            node.r,
            params.beta_q(),
            params.gamma(),
            result.window,
            config.step,
        );
        let r_inf = final_size(
            &EpidemicState {
                t: node.t + result.window,
                s,
                i,
                r: 1.0 - s - i,
            },
            params,
        )?
        .r_inf;
        if r_inf < scan_min {
            scan_min = r_inf;
            scan_argmin = node.t;
        }
        if node.t >= scan_limit {
            break;
        }
        let t = (node.t + dt).min(scan_limit);
        node = normal_hop(&node, t, params, config);
    }
    if result.r_inf > scan_min + SCAN_RESOLUTION {
        return Err(Error::Inconsistency(format!(
            "grid scan found a better window: start {} gives r_inf {}, while \
             the optimizer returned start {} with r_inf {}",
            scan_argmin, scan_min, result.start, result.r_inf
        )));
    }
    Ok(())
}

/// Which way a window was shifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    Left,
    Right,
}

/// Outcome of a conclusive shift experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftConclusion {
    pub direction: ShiftDirection,
    pub r_inf_base: f64,
    pub r_inf_shifted: f64,
    /// Whether the shift strictly decreased the final size.
    pub strictly_improved: bool,
    /// Measured `(c_sigma - c_tau) / delta` at the requested delta.
    pub measured_rate: f64,
    /// Same measurement at half the delta.
    pub measured_rate_half_delta: f64,
    /// First-order prediction from the window quadratures.
    pub predicted_rate: f64,
    /// `|measured_rate_half_delta - predicted_rate| <= 10%`.
    pub rate_within_tolerance: bool,
}

/// Report from [`verify_shift_lemma`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftLemmaReport {
    pub t0: f64,
    pub window: f64,
    pub delta: f64,
    pub q_value: f64,
    pub q_error: f64,
    /// `None` when |Q| sits below the noise floor (a near-optimal window).
    pub conclusion: Option<ShiftConclusion>,
}

impl ShiftLemmaReport {
    pub fn inconclusive(&self) -> bool {
        self.conclusion.is_none()
    }
}

/// Conserved quantity under the normal rate at a window end state.
fn c_value(s: f64, i: f64, rho_n: f64) -> f64 {
    i + s - rho_n * s.ln()
}

/// Shifts the window `[t0, t0 + T]` against the sign of Q and checks that
/// the final size strictly decreases, along with the first-order rate of the
/// conserved-quantity change.
///
/// With `Q > 0` the window moves left (needs `delta < t0`); with `Q < 0` it
/// moves right. The measured `(c_sigma - c_tau)/delta` is compared against
/// the closed form `-sign * beta_q (rho_q - rho_n) I0 I1 Q` at `delta` and
/// `delta/2`.
pub fn verify_shift_lemma(
    params: &EpidemicParams,
    i0: f64,
    t0: f64,
    window: f64,
    delta: f64,
    config: &IntegratorConfig,
) -> Result<ShiftLemmaReport> {
    config.validate()?;
    let initial = EpidemicState::initial(i0)?;
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(Error::invalid_params(format!(
            "window start must be nonnegative, got {t0}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid_params(format!(
            "shift delta must be positive, got {delta}"
        )));
    }

    let (s0, i_start, _) = advance(
        initial.s,
        initial.i,
        initial.r,
        params.beta_n(),
        params.gamma(),
        t0,
        config.step,
    );
    let base = window_profile(s0, i_start, window, params, config)?;

    let noise_floor = (10.0 * base.q.quadrature_error).max(PHI_TOL);
    if base.q.value.abs() <= noise_floor {
        return Ok(ShiftLemmaReport {
            t0,
            window,
            delta,
            q_value: base.q.value,
            q_error: base.q.quadrature_error,
            conclusion: None,
        });
    }

    let direction = if base.q.value > 0.0 {
        if delta >= t0 {
            return Err(Error::invalid_params(format!(
                "Q > 0 calls for a left shift, which needs delta < t0 \
                 (delta={delta}, t0={t0})"
            )));
        }
        ShiftDirection::Left
    } else {
        ShiftDirection::Right
    };
    let sign = match direction {
        ShiftDirection::Left => -1.0,
        ShiftDirection::Right => 1.0,
    };

    let rho_n = params.rho_n();
    let c_base = c_value(base.s_end, base.i_end, rho_n);

    // End-of-window conserved value for the window started at t0 + shift.
    let shifted_c = |shift: f64| -> Result<f64> {
        let (s, i, _) = advance(
            initial.s,
            initial.i,
            initial.r,
            params.beta_n(),
            params.gamma(),
            t0 + shift,
            config.step,
        );
        let profile = window_profile(s, i, window, params, config)?;
        Ok(c_value(profile.s_end, profile.i_end, rho_n))
    };

    let measured_rate = (shifted_c(sign * delta)? - c_base) / delta;
    let measured_rate_half_delta = (shifted_c(sign * 0.5 * delta)? - c_base) / (0.5 * delta);
    // Left shift: (c_sigma - c_tau)/delta -> -beta_q (rho_q - rho_n) I0 I1 Q;
    // a right shift reverses the perturbation and with it the sign.
    let predicted_rate =
        sign * params.beta_q() * (params.rho_q() - rho_n) * i_start * base.i_end * base.q.value;
    let rate_within_tolerance =
        (measured_rate_half_delta - predicted_rate).abs() <= 0.10 * predicted_rate.abs();

    let base_schedule = Schedule::contiguous(t0, window)?;
    let shifted_schedule = Schedule::contiguous(t0 + sign * delta, window)?;
    let r_inf_base = r_inf_for_schedule(params, &base_schedule, &initial, config)?.r_inf;
    let r_inf_shifted = r_inf_for_schedule(params, &shifted_schedule, &initial, config)?.r_inf;

    Ok(ShiftLemmaReport {
        t0,
        window,
        delta,
        q_value: base.q.value,
        q_error: base.q.quadrature_error,
        conclusion: Some(ShiftConclusion {
            direction,
            r_inf_base,
            r_inf_shifted,
            strictly_improved: r_inf_shifted < r_inf_base,
            measured_rate,
            measured_rate_half_delta,
            predicted_rate,
            rate_within_tolerance,
        }),
    })
}

/// Report from [`verify_order_preserving`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderPreservingReport {
    pub s0: f64,
    pub i0: f64,
    pub window: f64,
    pub delta: f64,
    pub q_value: f64,
    /// `beta_q (rho_q - rho_n) I(T) ∫ dt/I`; below one exactly when reducing
    /// the infection level helps.
    pub criterion: f64,
    /// `1 - I(T)/I0`, what the criterion must equal at a Q = 0 state.
    pub one_minus_ratio: f64,
    pub criterion_gap: f64,
    pub r_inf_base: f64,
    pub r_inf_reduced: f64,
    pub strictly_smaller: bool,
}

/// At a state with `Q(s0, i0, T) = 0`, checks that lowering the infection
/// level by `delta` strictly lowers the final size, and that the criterion
/// integral equals `1 - I(T)/I0`.
pub fn verify_order_preserving(
    params: &EpidemicParams,
    s0: f64,
    i0: f64,
    window: f64,
    delta: f64,
    config: &IntegratorConfig,
) -> Result<OrderPreservingReport> {
    config.validate()?;
    if !(delta > 0.0 && delta < i0) {
        return Err(Error::invalid_params(format!(
            "delta must lie in (0, i0), got delta={delta}, i0={i0}"
        )));
    }
    let base = window_profile(s0, i0, window, params, config)?;
    let q_tolerance = (10.0 * base.q.quadrature_error).max(1e-6);
    if base.q.value.abs() > q_tolerance {
        return Err(Error::invalid_params(format!(
            "the start state must satisfy Q = 0 within tolerance, got Q = {:e}",
            base.q.value
        )));
    }

    let criterion =
        params.beta_q() * (params.rho_q() - params.rho_n()) * base.i_end * base.inv_i.value;
    let one_minus_ratio = 1.0 - base.i_end / i0;

    let window_schedule = Schedule::contiguous(0.0, window)?;
    let start_base = EpidemicState::new(0.0, s0, i0, 1.0 - s0 - i0)?;
    let start_reduced = EpidemicState::new(0.0, s0, i0 - delta, 1.0 - s0 - (i0 - delta))?;
    let r_inf_base = r_inf_for_schedule(params, &window_schedule, &start_base, config)?.r_inf;
    let r_inf_reduced = r_inf_for_schedule(params, &window_schedule, &start_reduced, config)?.r_inf;

    Ok(OrderPreservingReport {
        s0,
        i0,
        window,
        delta,
        q_value: base.q.value,
        criterion,
        one_minus_ratio,
        criterion_gap: (criterion - one_minus_ratio).abs(),
        r_inf_base,
        r_inf_reduced,
        strictly_smaller: r_inf_reduced < r_inf_base,
    })
}

/// A configuration witnessing that the order-preserving property genuinely
/// needs its Q = 0 hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleWitness {
    pub params: EpidemicParams,
    pub s0: f64,
    pub i0: f64,
    /// Window length chosen so the quarantined flow ends exactly at
    /// `s = rho_q`.
    pub window: f64,
    /// Criterion integral; exceeds one by construction.
    pub criterion: f64,
    pub s_end: f64,
    /// `|S(T) - rho_q|` on the evaluation grid.
    pub s_end_target_gap: f64,
    pub delta: f64,
    pub r_inf_base: f64,
    pub r_inf_reduced: f64,
    /// Whether the reduced run really ends larger.
    pub reversed: bool,
}

/// Searches for a configuration where the criterion integral exceeds one and
/// lowering the initial infection level *raises* the final size.
///
/// Scans the initial infection level upward, choosing the window length for
/// each candidate by root-finding the time the reduced-rate flow reaches
/// `s = rho_q`; the integrand estimate then gives criterion
/// `>= beta_q (rho_q - rho_n) T > 1` once the window is long enough.
pub fn build_counterexample(
    params_hint: Option<EpidemicParams>,
    config: &IntegratorConfig,
) -> Result<CounterexampleWitness> {
    config.validate()?;
    let params = match params_hint {
        Some(p) => p,
        // rho_n small, rho_q below one: strongly supercritical normally,
        // still mildly supercritical under quarantine.
        None => EpidemicParams::from_r0(20.0, 2.0, 1.0 / 14.0)?,
    };
    let rho_q = params.rho_q();
    if rho_q >= 1.0 {
        return Err(Error::invalid_params(
            "counterexample construction needs rho_q < 1 (beta_q > gamma)",
        ));
    }

    let mut i0 = 1e-3;
    while i0 < 0.45 {
        if let Some(witness) = try_counterexample(&params, i0, config)? {
            return Ok(witness);
        }
        i0 *= 1.5;
    }
    Err(Error::Inconsistency(
        "counterexample search exhausted; the parameter hint does not admit \
         a criterion above one"
            .into(),
    ))
}

fn try_counterexample(
    params: &EpidemicParams,
    i0: f64,
    config: &IntegratorConfig,
) -> Result<Option<CounterexampleWitness>> {
    let s0 = 1.0 - i0;
    let rho_q = params.rho_q();
    if s0 <= rho_q {
        return Ok(None);
    }
    let gamma = params.gamma();
    let beta_q = params.beta_q();

    // Walk the reduced-rate flow until s crosses rho_q, then bisect the
    // crossing time inside the last step.
    let h = config.step;
    let (mut s, mut i) = (s0, i0);
    let mut t = 0.0;
    let cap = 50_000.0;
    let (mut s_prev, mut i_prev);
    loop {
        s_prev = s;
        i_prev = i;
        let (s2, i2, _) = crate::integrator::rk4_step(s, i, 0.0, beta_q, gamma, h);
        s = s2;
        i = i2;
        t += h;
        if s < rho_q {
            break;
        }
        if t > cap {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    let mut hi = h;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (sm, _, _) = crate::integrator::rk4_step(s_prev, i_prev, 0.0, beta_q, gamma, mid);
        if sm >= rho_q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let window = t - h + 0.5 * (lo + hi);
    if window <= 0.0 {
        return Ok(None);
    }

    let profile = window_profile(s0, i0, window, params, config)?;
    let criterion =
        beta_q * (params.rho_q() - params.rho_n()) * profile.i_end * profile.inv_i.value;
    if criterion <= 1.0 {
        return Ok(None);
    }

    let delta = i0 * 1e-3;
    let window_schedule = Schedule::contiguous(0.0, window)?;
    let start_base = EpidemicState::new(0.0, s0, i0, 0.0)?;
    let start_reduced = EpidemicState::new(0.0, s0, i0 - delta, delta)?;
    let r_inf_base = r_inf_for_schedule(params, &window_schedule, &start_base, config)?.r_inf;
    let r_inf_reduced = r_inf_for_schedule(params, &window_schedule, &start_reduced, config)?.r_inf;
    if r_inf_reduced <= r_inf_base {
        return Ok(None);
    }

    Ok(Some(CounterexampleWitness {
        params: *params,
        s0,
        i0,
        window,
        criterion,
        s_end: profile.s_end,
        s_end_target_gap: (profile.s_end - rho_q).abs(),
        delta,
        r_inf_base,
        r_inf_reduced,
        reversed: true,
    }))
}

/// Report from [`verify_monotone_tail`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneTailReport {
    pub ell: f64,
    /// Probe times, sorted ascending before evaluation.
    pub t_values: Vec<f64>,
    pub r_inf: Vec<f64>,
    pub nondecreasing: bool,
    /// Whether the input had to be reordered.
    pub input_reordered: bool,
}

/// Appends `[t, t + ell]` to the base schedule for each probe time and
/// checks that the final size is nondecreasing in `t`.
///
/// Every probe must start after the base schedule ends and in the regime
/// where the susceptible fraction has already crossed `rho_n` (the
/// closed-form `t_star` bound is accepted as an alternative certificate).
pub fn verify_monotone_tail(
    params: &EpidemicParams,
    i0: f64,
    base: &Schedule,
    ell: f64,
    t_values: &[f64],
    config: &IntegratorConfig,
) -> Result<MonotoneTailReport> {
    config.validate()?;
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::invalid_params(format!(
            "appended interval length must be positive, got {ell}"
        )));
    }
    if t_values.is_empty() {
        return Err(Error::invalid_params("no probe times given"));
    }
    let initial = EpidemicState::initial(i0)?;

    let mut sorted: Vec<f64> = t_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("probe times must not be NaN"));
    let input_reordered = sorted != t_values;

    let t_star_bound = t_star(params, i0, base.total_length() + ell);
    let base_end = base.end();
    for &t in &sorted {
        if t < base_end {
            return Err(Error::invalid_params(format!(
                "probe time {t} precedes the end of the base schedule ({base_end})"
            )));
        }
        if t < t_star_bound {
            // The closed-form bound does not cover this probe; accept it only
            // if the flow has demonstrably crossed rho_n by then.
            let s_at = state_under_schedule(params, base, &initial, t, config)?.0;
            if s_at > params.rho_n() {
                return Err(Error::invalid_params(format!(
                    "probe time {t} is before the susceptible fraction crosses \
                     rho_n (s = {s_at})"
                )));
            }
        }
    }

    let mut r_inf = Vec::with_capacity(sorted.len());
    for &t in &sorted {
        let schedule = base.with_appended(t, ell)?;
        r_inf.push(r_inf_for_schedule(params, &schedule, &initial, config)?.r_inf);
    }
    let nondecreasing = r_inf.windows(2).all(|w| w[1] >= w[0] - 1e-12);

    Ok(MonotoneTailReport {
        ell,
        t_values: sorted,
        r_inf,
        nondecreasing,
        input_reordered,
    })
}

/// State components `(s, i, r)` at absolute time `t` under a schedule.
pub(crate) fn state_under_schedule(
    params: &EpidemicParams,
    schedule: &Schedule,
    initial: &EpidemicState,
    t: f64,
    config: &IntegratorConfig,
) -> Result<(f64, f64, f64)> {
    let (mut s, mut i, mut r) = (initial.s, initial.i, initial.r);
    let mut cursor = 0.0;
    for iv in schedule.intervals() {
        if iv.start >= t {
            break;
        }
        if iv.start > cursor {
            (s, i, r) = advance(
                s,
                i,
                r,
                params.beta_n(),
                params.gamma(),
                iv.start - cursor,
                config.step,
            );
            cursor = iv.start;
        }
        let end = iv.end().min(t);
        if end > cursor {
            (s, i, r) = advance(
                s,
                i,
                r,
                params.beta_q(),
                params.gamma(),
                end - cursor,
                config.step,
            );
            cursor = end;
        }
    }
    if t > cursor {
        (s, i, r) = advance(
            s,
            i,
            r,
            params.beta_n(),
            params.gamma(),
            t - cursor,
            config.step,
        );
    }
    Ok((s, i, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_headline() -> EpidemicParams {
        EpidemicParams::from_r0(2.1, 0.8, 1.0 / 14.0).unwrap()
    }

    fn config() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn q_integral_rejects_zero_infection() {
        let p = params_headline();
        assert!(q_integral(0.9, 0.0, 30.0, &p, &config()).is_err());
    }

    #[test]
    fn q_is_positive_for_subcritical_transmission() {
        // beta_n <= gamma: the integrand gamma - beta_n * s stays positive.
        let p = EpidemicParams::new(0.05, 0.02, 0.06).unwrap();
        for (s0, i0) in [(0.9, 0.05), (0.5, 0.3), (0.99, 0.005)] {
            let q = q_integral(s0, i0, 25.0, &p, &config()).unwrap();
            assert!(q.value > 0.0, "Q({s0}, {i0}) = {}", q.value);
        }
    }

    #[test]
    fn q_shrinks_linearly_with_the_window() {
        let p = params_headline();
        let (s0, i0) = (0.95, 0.02);
        let slope = (p.gamma() - p.beta_n() * s0) / i0;
        for window in [1e-3, 1e-4] {
            let q = q_integral(s0, i0, window, &p, &config()).unwrap();
            assert!(
                (q.value / window - slope).abs() <= 1e-3 * slope.abs(),
                "window {window}: value/T = {} vs slope {slope}",
                q.value / window
            );
        }
    }

    #[test]
    fn epsilon0_matches_direct_evaluation() {
        let p = params_headline();
        // beta_q = 0.8 * gamma < gamma makes the exponential factor one.
        let eps = epsilon0_estimate(&p, 30.0).unwrap();
        let direct = (1.0 - 1.0 / 2.1) / (p.beta_q() * 30.0);
        assert!((eps - direct).abs() < 1e-15);
        assert!((eps - 0.3056).abs() < 1e-4, "eps = {eps}");
    }

    #[test]
    fn epsilon0_with_zero_exponent_uses_the_plain_denominator() {
        // beta_q = gamma: max{1, e^0} = 1.
        let gamma = 0.1;
        let p = EpidemicParams::new(0.3, gamma, gamma).unwrap();
        let eps = epsilon0_estimate(&p, 20.0).unwrap();
        let expected = (1.0 - gamma / 0.3) / (gamma * 20.0);
        assert!((eps - expected).abs() < 1e-15);
    }

    #[test]
    fn epsilon0_requires_supercritical_transmission() {
        let p = EpidemicParams::new(0.05, 0.02, 0.06).unwrap();
        assert!(epsilon0_estimate(&p, 30.0).is_err());
    }

    #[test]
    fn t_star_examples() {
        let p = params_headline();
        let bound = t_star(&p, 1e-4, 30.0);
        let direct = (30.0_f64 / 14.0).exp() / (p.beta_q() * 1e-4) * (2.1 * 0.9999_f64).ln();
        assert!((bound - direct).abs() < 1e-9 * direct);
        // about 1.1e6 days for this configuration: enormous on purpose
        assert!(bound > 1e6 && bound < 1.2e6, "bound = {bound}");

        // herd immunity at t = 0: the bound collapses
        let q = EpidemicParams::new(0.1, 0.05, 0.09).unwrap();
        assert_eq!(t_star(&q, 0.2, 30.0), 0.0);
    }

    #[test]
    fn bounds_bundle() {
        let p = params_headline();
        let b = Bounds::for_params(&p, 1e-4, 30.0);
        assert!(b.epsilon0.is_some());
        assert!(b.t_star > 0.0);
        let sub = EpidemicParams::new(0.05, 0.02, 0.06).unwrap();
        assert!(Bounds::for_params(&sub, 0.01, 30.0).epsilon0.is_none());
    }

    #[test]
    fn subcritical_transmission_puts_the_window_at_the_origin() {
        let p = EpidemicParams::new(0.05, 0.02, 0.06).unwrap();
        let ow = optimal_window(&p, 0.01, 20.0, &config()).unwrap();
        assert_eq!(ow.case, WindowCase::AtOrigin);
        assert_eq!(ow.start, 0.0);
        assert!(ow.q_residual > 0.0);
        assert!(ow.roots.is_empty());
    }

    #[test]
    fn headline_configuration_yields_an_interior_window() {
        let p = params_headline();
        let ow = optimal_window(&p, 1e-4, 30.0, &config()).unwrap();
        assert_eq!(ow.case, WindowCase::InteriorRoot);
        assert!(ow.start > 0.0);
        assert!(ow.q_residual.abs() <= PHI_TOL);
        assert!((ow.r_inf - 0.70).abs() < 0.01, "r_inf = {}", ow.r_inf);
        assert!(
            ow.peak_time >= ow.start && ow.peak_time <= ow.start + ow.window,
            "peak at {} outside window [{}, {}]",
            ow.peak_time,
            ow.start,
            ow.start + ow.window
        );
        assert!(!ow.roots.is_empty());
    }

    #[test]
    fn shift_lemma_is_inconclusive_at_the_root() {
        let p = params_headline();
        let ow = optimal_window(&p, 1e-4, 30.0, &config()).unwrap();
        let report = verify_shift_lemma(&p, 1e-4, ow.start, 30.0, 0.1, &config()).unwrap();
        assert!(report.inconclusive(), "q at root = {}", report.q_value);
    }

    #[test]
    fn order_preserving_rejects_states_away_from_the_root() {
        let p = params_headline();
        // Q at the origin is decidedly negative for small i0.
        let err = verify_order_preserving(&p, 0.9999, 1e-4, 30.0, 1e-6, &config());
        assert!(err.is_err());
    }

    #[test]
    fn monotone_tail_rejects_probes_before_the_crossing() {
        let p = params_headline();
        let base = Schedule::contiguous(0.0, 10.0).unwrap();
        let err = verify_monotone_tail(&p, 1e-4, &base, 5.0, &[20.0], &config());
        assert!(err.is_err());
    }

    #[test]
    fn monotone_tail_sorts_input_and_treats_equal_probes_identically() {
        // a large seed keeps the closed-form bound small, so the appended
        // windows qualify without any crossing search
        let p = EpidemicParams::new(0.15, 0.1, 0.1).unwrap();
        let i0 = 0.2;
        let base = Schedule::contiguous(0.0, 5.0).unwrap();
        assert!(t_star(&p, i0, 10.0) < 30.0);

        let rep = verify_monotone_tail(&p, i0, &base, 5.0, &[60.0, 40.0, 40.0], &config()).unwrap();
        assert!(rep.input_reordered);
        assert_eq!(rep.t_values, vec![40.0, 40.0, 60.0]);
        assert_eq!(rep.r_inf[0], rep.r_inf[1]);
        assert!(rep.nondecreasing);

        let sorted = verify_monotone_tail(&p, i0, &base, 5.0, &[40.0, 60.0], &config()).unwrap();
        assert!(!sorted.input_reordered);
    }
}
