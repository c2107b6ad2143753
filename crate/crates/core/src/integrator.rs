//! Fixed-step RK4 integration of the piecewise-constant-rate SIR system.
//!
//! The step size is shortened per span so that every quarantine boundary
//! coincides exactly with a step endpoint; the transmission rate is constant
//! within each accepted step. Fixed stepping keeps parameter sweeps
//! bit-reproducible, and with boundary placement handled exactly the
//! remaining error is the plain RK4 truncation error of a smooth system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sir::{
    final_size, rhs, EpidemicParams, EpidemicState, FinalSize, Schedule, SIMPLEX_TOL,
};

/// Step size and stopping controls for the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Base step size in days; spans are subdivided into equal steps no
    /// longer than this.
    pub step: f64,
    /// Infectious fraction below which the epidemic counts as extinct.
    pub extinction_threshold: f64,
    /// Absolute time limit for extinction integration.
    pub horizon_cap: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            extinction_threshold: 1e-10,
            horizon_cap: 10_000.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid_params(format!(
                "integrator step must be positive, got {}",
                self.step
            )));
        }
        if !(self.extinction_threshold > 0.0 && self.extinction_threshold < 1.0) {
            return Err(Error::invalid_params(format!(
                "extinction threshold must lie in (0, 1), got {}",
                self.extinction_threshold
            )));
        }
        if !(self.horizon_cap.is_finite() && self.horizon_cap > 0.0) {
            return Err(Error::invalid_params(format!(
                "horizon cap must be positive, got {}",
                self.horizon_cap
            )));
        }
        Ok(())
    }
}

/// A maximal span of constant transmission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentBeta {
    pub t_start: f64,
    pub t_end: f64,
    pub beta: f64,
}

/// Recorded solution of one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: EpidemicParams,
    points: Vec<EpidemicState>,
    segment_betas: Vec<SegmentBeta>,
    extinct_at: Option<f64>,
}

impl Trajectory {
    /// States at every accepted step, strictly increasing in `t`.
    pub fn points(&self) -> &[EpidemicState] {
        &self.points
    }

    /// Constant-rate spans partitioning `[0, horizon]`.
    pub fn segment_betas(&self) -> &[SegmentBeta] {
        &self.segment_betas
    }

    /// First time the infectious fraction fell below the extinction
    /// threshold, if it did.
    pub fn extinct_at(&self) -> Option<f64> {
        self.extinct_at
    }

    pub fn params(&self) -> &EpidemicParams {
        &self.params
    }

    pub fn initial(&self) -> &EpidemicState {
        &self.points[0]
    }

    pub fn last(&self) -> &EpidemicState {
        self.points
            .last()
            .expect("trajectory has at least one point")
    }

    /// First recorded state attaining the maximum infectious fraction.
    pub fn peak(&self) -> &EpidemicState {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if p.i > best.i {
                best = p;
            }
        }
        best
    }

    /// Transmission rate in effect on the span containing `(t, t + dt)` for
    /// small `dt`, i.e. the rate that drives the solution away from `t`.
    fn beta_after(&self, t: f64) -> Result<f64> {
        let idx = self.segment_betas.partition_point(|seg| seg.t_start <= t);
        if idx == 0 {
            return Err(Error::OutOfRange(format!("no segment covers t={t}")));
        }
        Ok(self.segment_betas[idx - 1].beta)
    }

    /// State at an arbitrary time within the recorded range.
    ///
    /// Stored times are returned verbatim; anything in between is obtained by
    /// one RK4 step from the nearest earlier stored state, so the result
    /// carries no error beyond the integrator's own order.
    pub fn state_at(&self, t: f64) -> Result<EpidemicState> {
        let last_t = self.last().t;
        if !t.is_finite() || t < 0.0 || t > last_t {
            return Err(Error::OutOfRange(format!(
                "t={t} outside the recorded range [0, {last_t}]"
            )));
        }
        let idx = self.points.partition_point(|p| p.t <= t);
        let anchor = &self.points[idx - 1];
        if anchor.t == t {
            return Ok(*anchor);
        }
        let beta = self.beta_after(anchor.t)?;
        let h = t - anchor.t;
        let (s, i, r) = rk4_step(anchor.s, anchor.i, anchor.r, beta, self.params.gamma(), h);
        Ok(EpidemicState { t, s, i, r })
    }
}

/// One classical fourth-order Runge-Kutta step.
#[inline]
pub(crate) fn rk4_step(s: f64, i: f64, r: f64, beta: f64, gamma: f64, h: f64) -> (f64, f64, f64) {
    let (k1s, k1i, k1r) = rhs(s, i, beta, gamma);
    let (k2s, k2i, k2r) = rhs(s + 0.5 * h * k1s, i + 0.5 * h * k1i, beta, gamma);
    let (k3s, k3i, k3r) = rhs(s + 0.5 * h * k2s, i + 0.5 * h * k2i, beta, gamma);
    let (k4s, k4i, k4r) = rhs(s + h * k3s, i + h * k3i, beta, gamma);
    let w = h / 6.0;
    (
        s + w * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
        i + w * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
        r + w * (k1r + 2.0 * k2r + 2.0 * k3r + k4r),
    )
}

/// Advances `(s, i, r)` over `len` days of constant `beta` without recording,
/// using the same equal-step subdivision as the recording integrator.
#[inline]
pub(crate) fn advance(
    mut s: f64,
    mut i: f64,
    mut r: f64,
    beta: f64,
    gamma: f64,
    len: f64,
    step: f64,
) -> (f64, f64, f64) {
    if len <= 0.0 {
        return (s, i, r);
    }
    let n = (len / step).ceil().max(1.0) as usize;
    let h = len / n as f64;
    for _ in 0..n {
        (s, i, r) = rk4_step(s, i, r, beta, gamma, h);
    }
    (s, i, r)
}

/// Splits `[0, horizon]` into maximal constant-rate spans `(start, end, beta)`.
fn segment_plan(
    schedule: &Schedule,
    horizon: f64,
    params: &EpidemicParams,
) -> Vec<(f64, f64, f64)> {
    let mut plan = Vec::new();
    let mut cursor = 0.0;
    for iv in schedule.intervals() {
        if iv.start >= horizon {
            break;
        }
        if iv.start > cursor {
            plan.push((cursor, iv.start, params.beta_n()));
            cursor = iv.start;
        }
        let end = iv.end().min(horizon);
        if end > cursor {
            plan.push((cursor, end, params.beta_q()));
            cursor = end;
        }
    }
    if cursor < horizon {
        plan.push((cursor, horizon, params.beta_n()));
    }
    plan
}

fn check_initial(initial: &EpidemicState) -> Result<()> {
    if initial.t != 0.0 {
        return Err(Error::invalid_params(format!(
            "integration starts at t = 0, got initial t = {}",
            initial.t
        )));
    }
    if initial.simplex_residual() > SIMPLEX_TOL {
        return Err(Error::invalid_params(format!(
            "initial state off the unit simplex by {:e}",
            initial.simplex_residual()
        )));
    }
    if !(initial.i > 0.0 && initial.i < 1.0) {
        return Err(Error::invalid_params(format!(
            "initial infectious fraction must lie in (0, 1), got {}",
            initial.i
        )));
    }
    if initial.s < 0.0 || initial.r < 0.0 {
        return Err(Error::invalid_params(
            "initial fractions must be nonnegative",
        ));
    }
    Ok(())
}

/// Recording integration driver.
struct Integration {
    params: EpidemicParams,
    config: IntegratorConfig,
    s: f64,
    i: f64,
    r: f64,
    t: f64,
    points: Vec<EpidemicState>,
    segment_betas: Vec<SegmentBeta>,
    extinct_at: Option<f64>,
}

impl Integration {
    fn new(params: EpidemicParams, initial: EpidemicState, config: IntegratorConfig) -> Self {
        let mut run = Self {
            params,
            config,
            s: initial.s,
            i: initial.i,
            r: initial.r,
            t: initial.t,
            points: vec![initial],
            segment_betas: Vec::new(),
            extinct_at: None,
        };
        if initial.i < config.extinction_threshold {
            run.extinct_at = Some(initial.t);
        }
        run
    }

    fn push(&mut self, t: f64) {
        self.t = t;
        self.points.push(EpidemicState {
            t,
            s: self.s,
            i: self.i,
            r: self.r,
        });
        if self.extinct_at.is_none() && self.i < self.config.extinction_threshold {
            self.extinct_at = Some(t);
        }
    }

    /// Integrates to `t_end` with constant `beta`, landing on `t_end` exactly.
    fn span(&mut self, t_end: f64, beta: f64) {
        let t0 = self.t;
        let len = t_end - t0;
        if len <= 0.0 {
            return;
        }
        let n = (len / self.config.step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        let gamma = self.params.gamma();
        for j in 1..=n {
            (self.s, self.i, self.r) = rk4_step(self.s, self.i, self.r, beta, gamma, h);
            let t = if j == n { t_end } else { t0 + j as f64 * h };
            self.push(t);
        }
        self.segment_betas.push(SegmentBeta {
            t_start: t0,
            t_end,
            beta,
        });
    }

    /// Integrates under `beta_n` until the infectious fraction drops below
    /// the extinction threshold or the horizon cap is reached.
    fn tail_until_extinct(&mut self) {
        let t0 = self.t;
        let cap = self.config.horizon_cap;
        if t0 >= cap {
            return;
        }
        let beta = self.params.beta_n();
        let gamma = self.params.gamma();
        let h = self.config.step;
        let mut j = 0u64;
        loop {
            if self.i < self.config.extinction_threshold {
                break;
            }
            let t_next = t0 + (j + 1) as f64 * h;
            if t_next >= cap {
                let last = cap - self.t;
                if last > 0.0 {
                    (self.s, self.i, self.r) = rk4_step(self.s, self.i, self.r, beta, gamma, last);
                    self.push(cap);
                }
                break;
            }
            (self.s, self.i, self.r) = rk4_step(self.s, self.i, self.r, beta, gamma, h);
            self.push(t_next);
            j += 1;
        }
        if self.t > t0 {
            self.segment_betas.push(SegmentBeta {
                t_start: t0,
                t_end: self.t,
                beta,
            });
        }
    }

    fn finish(self) -> Trajectory {
        Trajectory {
            params: self.params,
            points: self.points,
            segment_betas: self.segment_betas,
            extinct_at: self.extinct_at,
        }
    }
}

/// Integrates the schedule-driven system over `[0, horizon]`, recording every
/// accepted step. Each quarantine boundary lands exactly on a step endpoint.
pub fn integrate(
    params: &EpidemicParams,
    schedule: &Schedule,
    initial: &EpidemicState,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    check_initial(initial)?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::invalid_params(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let mut run = Integration::new(*params, *initial, *config);
    for (_, t_end, beta) in segment_plan(schedule, horizon, params) {
        run.span(t_end, beta);
    }
    Ok(run.finish())
}

/// Integrates past the last quarantine interval until the infectious fraction
/// falls below the extinction threshold (or the horizon cap), then hands the
/// last state to the final-size solve.
///
/// The long tail serves as a cross-check; the conserved-quantity handoff in
/// [`r_inf_for_schedule`] gives the same answer from the quarantine-end state
/// alone and is what the optimizer loops use.
pub fn integrate_to_extinction(
    params: &EpidemicParams,
    schedule: &Schedule,
    initial: &EpidemicState,
    config: &IntegratorConfig,
) -> Result<(Trajectory, FinalSize)> {
    config.validate()?;
    check_initial(initial)?;
    let mut run = Integration::new(*params, *initial, *config);
    for (_, t_end, beta) in segment_plan(schedule, schedule.end(), params) {
        run.span(t_end, beta);
    }
    run.tail_until_extinct();
    let traj = run.finish();
    let last = *traj.last();
    if last.i >= config.extinction_threshold && last.s > params.rho_n() {
        return Err(Error::nonconvergence(
            "horizon cap reached while the epidemic is still above threshold",
            last.i,
        ));
    }
    let fs = final_size(&last, params)?;
    Ok((traj, fs))
}

/// Canonical `R(inf)` for a schedule: integrate to the end of the last
/// quarantine interval, then solve the final-size equation, which is exact
/// once the rate stays constant.
pub fn r_inf_for_schedule(
    params: &EpidemicParams,
    schedule: &Schedule,
    initial: &EpidemicState,
    config: &IntegratorConfig,
) -> Result<FinalSize> {
    config.validate()?;
    check_initial(initial)?;
    let (mut s, mut i, mut r) = (initial.s, initial.i, initial.r);
    for (t_start, t_end, beta) in segment_plan(schedule, schedule.end(), params) {
        (s, i, r) = advance(s, i, r, beta, params.gamma(), t_end - t_start, config.step);
    }
    let state = EpidemicState {
        t: schedule.end(),
        s,
        i,
        r,
    };
    final_size(&state, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sir::conserved_quantity;

    fn params_headline() -> EpidemicParams {
        EpidemicParams::from_r0(2.1, 0.8, 1.0 / 14.0).unwrap()
    }

    fn coarse() -> IntegratorConfig {
        IntegratorConfig {
            step: 0.05,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig {
            step: 0.0,
            ..IntegratorConfig::default()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            extinction_threshold: 0.0,
            ..IntegratorConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_horizon_records_only_the_initial_state() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let traj = integrate(&p, &Schedule::empty(), &init, 0.0, &coarse()).unwrap();
        assert_eq!(traj.points().len(), 1);
        assert_eq!(traj.points()[0], init);
        assert!(traj.segment_betas().is_empty());
    }

    #[test]
    fn schedule_boundaries_land_exactly_on_step_endpoints() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let sched = Schedule::new(vec![(10.37, 7.21), (30.0, 12.5)]).unwrap();
        let traj = integrate(&p, &sched, &init, 60.0, &coarse()).unwrap();
        for edge in [10.37, 10.37 + 7.21, 30.0, 42.5, 60.0] {
            assert!(
                traj.points().iter().any(|pt| pt.t == edge),
                "no step endpoint equals {edge} exactly"
            );
        }
        // segments partition [0, horizon] and carry the right rate
        let segs = traj.segment_betas();
        assert_eq!(segs.first().unwrap().t_start, 0.0);
        assert_eq!(segs.last().unwrap().t_end, 60.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
        }
        assert_eq!(segs[1].beta, p.beta_q());
        assert_eq!(segs[1].t_start, 10.37);
    }

    #[test]
    fn points_strictly_increasing_susceptibles_strictly_decreasing() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-3).unwrap();
        let sched = Schedule::contiguous(20.0, 30.0).unwrap();
        let traj = integrate(&p, &sched, &init, 120.0, &coarse()).unwrap();
        for w in traj.points().windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].s < w[0].s, "s not strictly decreasing at t={}", w[1].t);
            assert!(w[1].simplex_residual() <= 1e-9);
        }
    }

    #[test]
    fn conserved_quantity_drift_stays_small_per_segment() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-3).unwrap();
        let sched = Schedule::contiguous(25.0, 30.0).unwrap();
        let traj = integrate(&p, &sched, &init, 150.0, &IntegratorConfig::default()).unwrap();
        for seg in traj.segment_betas() {
            let rho = p.gamma() / seg.beta;
            let a = traj.state_at(seg.t_start).unwrap();
            let b = traj.state_at(seg.t_end).unwrap();
            let drift =
                (conserved_quantity(&b, rho).unwrap() - conserved_quantity(&a, rho).unwrap()).abs();
            let budget = 1e-8 * (seg.t_end - seg.t_start).max(1.0);
            assert!(
                drift <= budget,
                "conserved drift {drift:e} over [{}, {}] exceeds {budget:e}",
                seg.t_start,
                seg.t_end
            );
        }
    }

    #[test]
    fn no_quarantine_run_reaches_the_expected_attack_rate() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let traj = integrate(&p, &Schedule::empty(), &init, 600.0, &coarse()).unwrap();
        let r600 = traj.last().r;
        assert!((r600 - 0.82).abs() < 0.01, "r(600) = {r600}");
    }

    #[test]
    fn splitting_an_interval_in_two_changes_nothing() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let joined = Schedule::contiguous(40.0, 30.0).unwrap();
        let split = Schedule::new(vec![(40.0, 15.0), (55.0, 15.0)]).unwrap();
        let config = coarse();
        let a = integrate(&p, &joined, &init, 100.0, &config).unwrap();
        let b = integrate(&p, &split, &init, 100.0, &config).unwrap();
        assert_eq!(a.points().len(), b.points().len());
        for (x, y) in a.points().iter().zip(b.points()) {
            assert!((x.t - y.t).abs() <= 1e-10);
            assert!((x.s - y.s).abs() <= 1e-10);
            assert!((x.i - y.i).abs() <= 1e-10);
            assert!((x.r - y.r).abs() <= 1e-10);
        }
    }

    #[test]
    fn schedule_is_irrelevant_when_rates_coincide() {
        // beta_q must be strictly below beta_n, so use the closest double.
        let gamma = 1.0 / 14.0;
        let beta = 0.15;
        let p = EpidemicParams::new(beta, beta * (1.0 - 1e-15), gamma).unwrap();
        let init = EpidemicState::initial(1e-3).unwrap();
        let a = integrate(&p, &Schedule::empty(), &init, 80.0, &coarse()).unwrap();
        let b = integrate(
            &p,
            &Schedule::contiguous(10.0, 30.0).unwrap(),
            &init,
            80.0,
            &coarse(),
        )
        .unwrap();
        for t in [0.0, 15.0, 40.0, 80.0] {
            let x = a.state_at(t).unwrap();
            let y = b.state_at(t).unwrap();
            assert!((x.s - y.s).abs() <= 1e-12, "s differs at t={t}");
            assert!((x.i - y.i).abs() <= 1e-12, "i differs at t={t}");
        }
    }

    #[test]
    fn state_at_returns_stored_points_verbatim() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let traj = integrate(&p, &Schedule::empty(), &init, 10.0, &coarse()).unwrap();
        assert_eq!(traj.state_at(0.0).unwrap(), init);
        let stored = traj.points()[57];
        assert_eq!(traj.state_at(stored.t).unwrap(), stored);
        assert!(traj.state_at(-1.0).is_err());
        assert!(traj.state_at(10.1).is_err());
    }

    #[test]
    fn state_at_midstep_matches_half_step_reintegration() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-3).unwrap();
        let traj = integrate(&p, &Schedule::empty(), &init, 20.0, &coarse()).unwrap();
        // halfway between two accepted steps
        let a = traj.points()[100];
        let b = traj.points()[101];
        let mid = 0.5 * (a.t + b.t);
        let probe = traj.state_at(mid).unwrap();

        let halved = IntegratorConfig {
            step: coarse().step / 2.0,
            ..coarse()
        };
        let fine = integrate(&p, &Schedule::empty(), &init, 20.0, &halved).unwrap();
        let oracle = fine.state_at(mid).unwrap();
        assert!((probe.s - oracle.s).abs() <= 1e-10);
        assert!((probe.i - oracle.i).abs() <= 1e-10);
    }

    #[test]
    fn subcritical_epidemic_decays_monotonically() {
        // beta_n <= gamma: infections only decline.
        let p = EpidemicParams::new(0.06, 0.03, 1.0 / 14.0).unwrap();
        let init = EpidemicState::initial(0.05).unwrap();
        let (traj, fs) = integrate_to_extinction(&p, &Schedule::empty(), &init, &coarse()).unwrap();
        for w in traj.points().windows(2) {
            assert!(w[1].i < w[0].i, "i not decreasing at t={}", w[1].t);
        }
        assert!(
            fs.r_inf < 0.2,
            "subcritical outbreak grew: r_inf={}",
            fs.r_inf
        );
        assert!(traj.extinct_at().is_some());
    }

    #[test]
    fn extinction_flags_a_cap_hit_while_still_supercritical() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        // the outbreak has barely started by day 10, so s is still above
        // rho_n when the cap cuts the run short
        let config = IntegratorConfig {
            step: 0.05,
            horizon_cap: 10.0,
            ..IntegratorConfig::default()
        };
        let err = integrate_to_extinction(&p, &Schedule::empty(), &init, &config);
        assert!(matches!(err, Err(crate::Error::Nonconvergence { .. })));
    }

    #[test]
    fn extinction_run_agrees_with_quarantine_end_handoff() {
        let p = params_headline();
        let init = EpidemicState::initial(1e-4).unwrap();
        let sched = Schedule::contiguous(60.0, 30.0).unwrap();
        let config = IntegratorConfig::default();
        let (traj, fs_long) = integrate_to_extinction(&p, &sched, &init, &config).unwrap();
        let fs_handoff = r_inf_for_schedule(&p, &sched, &init, &config).unwrap();
        assert!(
            (fs_long.r_inf - fs_handoff.r_inf).abs() <= 1e-6,
            "long={} handoff={}",
            fs_long.r_inf,
            fs_handoff.r_inf
        );
        assert!(traj.extinct_at().is_some());
        // once below the threshold under normal transmission, i keeps falling
        let rho_n = p.rho_n();
        let mut below = false;
        for w in traj.points().windows(2) {
            if below && w[0].s < rho_n {
                assert!(
                    w[1].i < w[0].i,
                    "i grew after crossing rho_n at t={}",
                    w[1].t
                );
            }
            below = w[1].s < rho_n;
        }
    }
}
