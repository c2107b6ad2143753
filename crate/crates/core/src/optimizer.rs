//! Grid scans and exhaustive multi-interval search over quarantine
//! schedules.
//!
//! The brute-force enumerator is the empirical companion to the
//! single-window optimizer: it walks every multi-interval schedule on a
//! start/length grid and confirms that nothing beats the contiguous optimum
//! beyond grid resolution.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::optimal_window;
use crate::error::{Error, Result};
use crate::integrator::{advance, IntegratorConfig};
use crate::sir::{final_size, EpidemicParams, EpidemicState, Schedule};

/// A one- or two-parameter scan with its argmin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult<P> {
    pub axis: Vec<P>,
    pub r_inf: Vec<f64>,
    /// Index of the minimal value; first occurrence on ties.
    pub argmin_index: usize,
}

impl<P> ScanResult<P> {
    fn from_values(axis: Vec<P>, r_inf: Vec<f64>) -> Self {
        let mut argmin_index = 0;
        for (k, &v) in r_inf.iter().enumerate() {
            if v < r_inf[argmin_index] {
                argmin_index = k;
            }
        }
        Self {
            axis,
            r_inf,
            argmin_index,
        }
    }
}

/// Final size of the window `[t, t + window]` entered from `(s, i)`.
fn window_value(
    s: f64,
    i: f64,
    t: f64,
    window: f64,
    params: &EpidemicParams,
    config: &IntegratorConfig,
) -> Result<f64> {
    let (s1, i1, _) = advance(
        s,
        i,
        0.0,
        params.beta_q(),
        params.gamma(),
        window,
        config.step,
    );
    Ok(final_size(
        &EpidemicState {
            t: t + window,
            s: s1,
            i: i1,
            r: 1.0 - s1 - i1,
        },
        params,
    )?
    .r_inf)
}

/// Final size of a contiguous window `[t0, t0 + window]` for every start on
/// the grid.
pub fn scan_contiguous(
    params: &EpidemicParams,
    i0: f64,
    window: f64,
    t0_grid: &[f64],
    config: &IntegratorConfig,
) -> Result<ScanResult<f64>> {
    config.validate()?;
    if t0_grid.is_empty() {
        return Err(Error::invalid_params("empty start grid"));
    }
    for w in t0_grid.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid_params("start grid must be sorted"));
        }
    }
    if !(t0_grid[0] >= 0.0 && t0_grid.iter().all(|t| t.is_finite())) {
        return Err(Error::invalid_params(
            "start grid must be nonnegative and finite",
        ));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid_params(format!(
            "window length must be positive, got {window}"
        )));
    }
    let initial = EpidemicState::initial(i0)?;

    // One pass along the unquarantined flow; each grid start branches off
    // into its own quarantine window.
    let (mut s, mut i, mut r) = (initial.s, initial.i, initial.r);
    let mut cursor = 0.0;
    let mut values = Vec::with_capacity(t0_grid.len());
    for &t0 in t0_grid {
        (s, i, r) = advance(
            s,
            i,
            r,
            params.beta_n(),
            params.gamma(),
            t0 - cursor,
            config.step,
        );
        cursor = t0;
        values.push(window_value(s, i, t0, window, params, config)?);
    }
    Ok(ScanResult::from_values(t0_grid.to_vec(), values))
}

/// Outcome of the exhaustive multi-interval enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    /// Best schedule found on the grid (may be a collapsed contiguous one).
    pub best_schedule: Schedule,
    pub best_r_inf: f64,
    /// Contiguous optimum from the window optimizer, off the grid.
    pub contiguous_r_inf: f64,
    /// `best_r_inf - contiguous_r_inf`; nonnegative up to grid error.
    pub margin: f64,
    /// Best contiguous candidate restricted to the same grid; the gap to
    /// `contiguous_r_inf` estimates the grid-induced error.
    pub grid_contiguous_r_inf: f64,
    /// Number of window values evaluated.
    pub evaluated: usize,
}

const BRUTE_FORCE_BUDGET: usize = 200_000;

/// One enumeration candidate with its value.
#[derive(Debug, Clone)]
struct Candidate {
    intervals: Vec<(f64, f64)>,
    r_inf: f64,
}

impl Candidate {
    /// r_inf first, then lexicographically earlier schedule.
    fn better_than(&self, other: &Candidate) -> bool {
        if self.r_inf != other.r_inf {
            return self.r_inf < other.r_inf;
        }
        let a = self.intervals.iter().flat_map(|&(s, l)| [s, l]);
        let b = other.intervals.iter().flat_map(|&(s, l)| [s, l]);
        for (x, y) in a.zip(b) {
            if x != y {
                return x < y;
            }
        }
        self.intervals.len() < other.intervals.len()
    }
}

/// Exhaustively enumerates schedules of `m` disjoint intervals with starts
/// and lengths on a `grid_step` lattice (lengths summing to the total
/// quarantine budget) and compares the best against the contiguous optimum.
///
/// Starts are enumerated until the susceptible fraction ahead of the last
/// interval has fallen below `rho_n`: from there on, moving that interval
/// earlier always improves the outcome, so no later candidate can contain
/// the optimum.
pub fn brute_force_multi_interval(
    params: &EpidemicParams,
    i0: f64,
    window: f64,
    m: usize,
    grid_step: f64,
    config: &IntegratorConfig,
) -> Result<BruteForceResult> {
    config.validate()?;
    if !(m == 2 || m == 3) {
        return Err(Error::invalid_params(format!(
            "interval count must be 2 or 3, got {m}"
        )));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::invalid_params(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let parts = window / grid_step;
    if (parts - parts.round()).abs() > 1e-9 || parts.round() < 4.0 {
        return Err(Error::invalid_params(format!(
            "grid step must divide the window into at least 4 parts, got {parts}"
        )));
    }
    let n_len = parts.round() as usize;
    let initial = EpidemicState::initial(i0)?;
    let gamma = params.gamma();
    let beta_n = params.beta_n();
    let beta_q = params.beta_q();
    let rho_trunc = params.rho_n() * (1.0 - 1e-6);

    let contiguous = optimal_window(params, i0, window, config)?;

    // Prefix states of the plain flow at every lattice point up to the
    // rho_n crossing; the first interval never profitably starts beyond it.
    let mut prefix: Vec<(f64, f64, f64)> = Vec::new();
    {
        let (mut s, mut i, mut r) = (initial.s, initial.i, initial.r);
        let mut idx = 0usize;
        loop {
            prefix.push((s, i, r));
            if s < rho_trunc || (idx as f64) * grid_step > t_hard_bound(params, i0, window) {
                break;
            }
            idx += 1;
            (s, i, r) = advance(s, i, r, beta_n, gamma, grid_step, config.step);
        }
    }
    let n_starts = prefix.len();

    // Pessimistic instance estimate before doing any work.
    let chain_bound = n_starts + n_len + 2;
    let estimate = match m {
        2 => n_starts * (n_len + 1) * chain_bound,
        _ => {
            let pairs = (n_len.saturating_sub(1)) * n_len / 2;
            n_starts * pairs * chain_bound * chain_bound
        }
    };
    if estimate > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "about {estimate} window evaluations would be needed (budget \
             {BRUTE_FORCE_BUDGET}); coarsen the grid"
        )));
    }

    // Contiguous candidates on the grid (the collapsed boundary of the
    // enumeration where one length is zero).
    let mut evaluated = 0usize;
    let mut best: Option<Candidate> = None;
    let mut grid_contiguous = f64::INFINITY;
    for (j, &(s, i, _)) in prefix.iter().enumerate() {
        let t = j as f64 * grid_step;
        let r_inf = window_value(s, i, t, window, params, config)?;
        evaluated += 1;
        grid_contiguous = grid_contiguous.min(r_inf);
        consider(
            &mut best,
            Candidate {
                intervals: vec![(t, window)],
                r_inf,
            },
        );
    }

    // True multi-interval candidates, parallel over (first length, first
    // start); each task walks its second-start chain sequentially.
    let tasks: Vec<(usize, usize)> = match m {
        2 => (1..n_len)
            .flat_map(|j1| (0..n_starts).map(move |jt| (j1, jt)))
            .collect(),
        _ => Vec::new(),
    };

    if m == 2 {
        let results: Result<Vec<(Option<Candidate>, usize)>> = tasks
            .par_iter()
            .map(|&(j1, jt1)| {
                let l1 = j1 as f64 * grid_step;
                let l2 = window - l1;
                let t1 = jt1 as f64 * grid_step;
                let (s0, i0v, r0) = prefix[jt1];
                let (mut s, mut i, mut r) = advance(s0, i0v, r0, beta_q, gamma, l1, config.step);
                let mut local_best: Option<Candidate> = None;
                let mut local_count = 0usize;
                let mut jt2 = jt1 + j1 + 1;
                let mut prev_t = t1 + l1;
                loop {
                    let t2 = jt2 as f64 * grid_step;
                    (s, i, r) = advance(s, i, r, beta_n, gamma, t2 - prev_t, config.step);
                    prev_t = t2;
                    if s < rho_trunc || t2 > t_hard_bound(params, i0, window) {
                        break;
                    }
                    let r_inf = window_value(s, i, t2, l2, params, config)?;
                    local_count += 1;
                    consider(
                        &mut local_best,
                        Candidate {
                            intervals: vec![(t1, l1), (t2, l2)],
                            r_inf,
                        },
                    );
                    jt2 += 1;
                }
                Ok((local_best, local_count))
            })
            .collect();
        for (cand, count) in results? {
            evaluated += count;
            if let Some(c) = cand {
                consider(&mut best, c);
            }
        }
    } else {
        // m == 3: two inner lengths on the lattice, sequential chains over
        // both later starts.
        for j1 in 1..n_len {
            for j2 in 1..(n_len - j1) {
                let l1 = j1 as f64 * grid_step;
                let l2 = j2 as f64 * grid_step;
                let l3 = window - l1 - l2;
                for (jt1, &(s0, i0v, r0)) in prefix.iter().enumerate() {
                    let t1 = jt1 as f64 * grid_step;
                    let after_first = advance(s0, i0v, r0, beta_q, gamma, l1, config.step);
                    let mut jt2 = jt1 + j1 + 1;
                    let (mut s2, mut i2, mut r2) = after_first;
                    let mut prev_t2 = t1 + l1;
                    loop {
                        let t2 = jt2 as f64 * grid_step;
                        (s2, i2, r2) =
                            advance(s2, i2, r2, beta_n, gamma, t2 - prev_t2, config.step);
                        prev_t2 = t2;
                        if s2 < rho_trunc || t2 > t_hard_bound(params, i0, window) {
                            break;
                        }
                        let after_second = advance(s2, i2, r2, beta_q, gamma, l2, config.step);
                        let mut jt3 = jt2 + j2 + 1;
                        let (mut s3, mut i3, mut r3) = after_second;
                        let mut prev_t3 = t2 + l2;
                        loop {
                            let t3 = jt3 as f64 * grid_step;
                            (s3, i3, r3) =
                                advance(s3, i3, r3, beta_n, gamma, t3 - prev_t3, config.step);
                            prev_t3 = t3;
                            if s3 < rho_trunc || t3 > t_hard_bound(params, i0, window) {
                                break;
                            }
                            let r_inf = window_value(s3, i3, t3, l3, params, config)?;
                            evaluated += 1;
                            if evaluated > BRUTE_FORCE_BUDGET {
                                return Err(Error::BudgetExceeded(format!(
                                    "more than {BRUTE_FORCE_BUDGET} window evaluations; \
                                     coarsen the grid"
                                )));
                            }
                            consider(
                                &mut best,
                                Candidate {
                                    intervals: vec![(t1, l1), (t2, l2), (t3, l3)],
                                    r_inf,
                                },
                            );
                            jt3 += 1;
                        }
                        jt2 += 1;
                    }
                }
            }
        }
    }

    let best = best.expect("at least one contiguous candidate exists");
    let best_schedule = Schedule::new(best.intervals.clone())?;
    Ok(BruteForceResult {
        best_schedule,
        best_r_inf: best.r_inf,
        contiguous_r_inf: contiguous.r_inf,
        margin: best.r_inf - contiguous.r_inf,
        grid_contiguous_r_inf: grid_contiguous,
        evaluated,
    })
}

fn consider(best: &mut Option<Candidate>, candidate: Candidate) {
    match best {
        None => *best = Some(candidate),
        Some(current) => {
            if candidate.better_than(current) {
                *best = Some(candidate);
            }
        }
    }
}

/// Hard cap on start times, matching the window optimizer's search bound.
fn t_hard_bound(params: &EpidemicParams, i0: f64, window: f64) -> f64 {
    crate::analysis::t_star(params, i0, window) + window
}

/// Minimal final size under an optimally placed contiguous window for every
/// `(r0_n, ratio)` cell, where `beta_n = r0_n * gamma` and
/// `beta_q = ratio * beta_n`.
pub fn sweep_heatmap(
    gamma: f64,
    window: f64,
    i0: f64,
    r0n_grid: &[f64],
    ratio_grid: &[f64],
    config: &IntegratorConfig,
) -> Result<ScanResult<(f64, f64)>> {
    config.validate()?;
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::invalid_params(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if r0n_grid.is_empty() || ratio_grid.is_empty() {
        return Err(Error::invalid_params("empty sweep grid"));
    }
    for &r0n in r0n_grid {
        if !(r0n > 0.0 && r0n.is_finite()) {
            return Err(Error::invalid_params(format!(
                "reproduction numbers must be positive, got {r0n}"
            )));
        }
    }
    for &ratio in ratio_grid {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid_params(format!(
                "quarantine ratio must lie in (0, 1), got {ratio}"
            )));
        }
    }

    let axis: Vec<(f64, f64)> = r0n_grid
        .iter()
        .flat_map(|&r0n| ratio_grid.iter().map(move |&ratio| (r0n, ratio)))
        .collect();
    let values: Result<Vec<f64>> = axis
        .par_iter()
        .map(|&(r0n, ratio)| {
            let params = EpidemicParams::from_r0(r0n, r0n * ratio, gamma)?;
            Ok(optimal_window(&params, i0, window, config)?.r_inf)
        })
        .collect();
    Ok(ScanResult::from_values(axis, values?))
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn scan_of_a_single_point_has_one_entry() {
        let p = params_headline();
        let scan = scan_contiguous(&p, 1e-4, 30.0, &[50.0], &coarse()).unwrap();
        assert_eq!(scan.axis.len(), 1);
        assert_eq!(scan.r_inf.len(), 1);
        assert_eq!(scan.argmin_index, 0);
    }

    #[test]
    fn scan_rejects_unsorted_grids() {
        let p = params_headline();
        assert!(scan_contiguous(&p, 1e-4, 30.0, &[10.0, 5.0], &coarse()).is_err());
        assert!(scan_contiguous(&p, 1e-4, 30.0, &[], &coarse()).is_err());
    }

    #[test]
    fn early_and_late_starts_are_futile() {
        let p = params_headline();
        let fs = crate::sir::final_size(&EpidemicState::initial(1e-4).unwrap(), &p).unwrap();
        let scan = scan_contiguous(&p, 1e-4, 30.0, &[0.0, 300.0], &coarse()).unwrap();
        for (&t0, &r) in scan.axis.iter().zip(&scan.r_inf) {
            assert!(
                (r - fs.r_inf).abs() < 0.01,
                "start {t0}: r_inf {r} vs no-quarantine {}",
                fs.r_inf
            );
        }
    }

    #[test]
    fn scan_values_never_exceed_the_no_quarantine_size() {
        let p = params_headline();
        let fs = crate::sir::final_size(&EpidemicState::initial(1e-4).unwrap(), &p).unwrap();
        let grid: Vec<f64> = (0..=30).map(|k| k as f64 * 10.0).collect();
        let scan = scan_contiguous(&p, 1e-4, 30.0, &grid, &coarse()).unwrap();
        for &r in &scan.r_inf {
            assert!(r > 0.0 && r <= fs.r_inf + 1e-6, "r_inf = {r}");
        }
    }

    #[test]
    fn brute_force_rejects_bad_arguments() {
        let p = params_headline();
        assert!(brute_force_multi_interval(&p, 1e-4, 30.0, 4, 2.5, &coarse()).is_err());
        assert!(brute_force_multi_interval(&p, 1e-4, 30.0, 2, 11.0, &coarse()).is_err());
        assert!(brute_force_multi_interval(&p, 1e-4, 30.0, 2, 0.0, &coarse()).is_err());
    }

    #[test]
    fn brute_force_budget_guard_trips_on_fine_grids() {
        let p = params_headline();
        // m = 3 on a 2.5-day lattice is far beyond the budget.
        let err = brute_force_multi_interval(&p, 1e-4, 30.0, 3, 2.5, &coarse());
        assert!(matches!(err, Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn brute_force_three_intervals_on_a_coarse_grid() {
        let p = params_headline();
        let config = IntegratorConfig {
            step: 0.1,
            ..IntegratorConfig::default()
        };
        let result = brute_force_multi_interval(&p, 1e-4, 30.0, 3, 7.5, &config).unwrap();
        assert!(result.evaluated > 0);
        assert!(
            result.margin >= -1e-3,
            "a split schedule beat the contiguous optimum by {}",
            -result.margin
        );
    }

    #[test]
    fn brute_force_two_intervals_never_beats_the_window() {
        let p = params_headline();
        let config = IntegratorConfig {
            step: 0.1,
            ..IntegratorConfig::default()
        };
        let result = brute_force_multi_interval(&p, 1e-4, 30.0, 2, 7.5, &config).unwrap();
        assert!(result.margin >= -1e-3, "margin = {}", result.margin);
        // grid-collapsed contiguous candidates can only be worse than the
        // continuum optimum
        assert!(result.grid_contiguous_r_inf >= result.contiguous_r_inf - 1e-6);
        assert!(result.best_schedule.total_length() - 30.0 <= 1e-9);
    }

    #[test]
    fn sweep_rejects_degenerate_ratios() {
        assert!(sweep_heatmap(0.1, 30.0, 1e-4, &[2.0], &[1.0], &coarse()).is_err());
        assert!(sweep_heatmap(0.1, 30.0, 1e-4, &[2.0], &[0.0], &coarse()).is_err());
        assert!(sweep_heatmap(0.0, 30.0, 1e-4, &[2.0], &[0.5], &coarse()).is_err());
    }

    #[test]
    fn sweep_subcritical_cell_stays_near_the_seed_level() {
        let scan = sweep_heatmap(0.1, 20.0, 1e-4, &[0.9], &[0.5], &coarse()).unwrap();
        assert!(scan.r_inf[0] < 1e-2, "r_inf = {}", scan.r_inf[0]);
    }

    #[test]
    fn sweep_is_deterministic() {
        let a = sweep_heatmap(0.1, 20.0, 1e-3, &[1.5, 2.5], &[0.4, 0.8], &coarse()).unwrap();
        let b = sweep_heatmap(0.1, 20.0, 1e-3, &[1.5, 2.5], &[0.4, 0.8], &coarse()).unwrap();
        assert_eq!(a, b);
    }
}
