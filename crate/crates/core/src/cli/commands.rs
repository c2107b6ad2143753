//! Implementations behind the `qsched` subcommands. Each writes its files
//! into the output directory and returns their paths.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::analysis::{optimal_window, Bounds};
use crate::cli::output::{fmt_f64, write_csv, write_json};
use crate::cli::RunConfig;
use crate::error::Result;
use crate::integrator::{integrate, Trajectory};
use crate::optimizer::{scan_contiguous, sweep_heatmap};
use crate::sir::{conserved_quantity, EpidemicState, Schedule};

fn trajectory_rows(traj: &Trajectory) -> Vec<String> {
    let segs = traj.segment_betas();
    let fallback = traj.params().beta_n();
    let mut k = 0;
    traj.points()
        .iter()
        .map(|p| {
            while k + 1 < segs.len() && p.t >= segs[k].t_end {
                k += 1;
            }
            let beta = segs.get(k).map_or(fallback, |seg| seg.beta);
            format!(
                "{},{},{},{},{}",
                fmt_f64(p.t),
                fmt_f64(p.s),
                fmt_f64(p.i),
                fmt_f64(p.r),
                fmt_f64(beta)
            )
        })
        .collect()
}

/// Trajectory CSVs for the unquarantined run and the optimally windowed run.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let ic = cfg.integrator();
    let initial = EpidemicState::initial(cfg.i0)?;

    let no_quarantine = integrate(&params, &Schedule::empty(), &initial, cfg.horizon, &ic)?;
    let window = optimal_window(&params, cfg.i0, cfg.window, &ic)?;
    let quarantined = integrate(&params, &window.schedule(), &initial, cfg.horizon, &ic)?;

    let header = "t,s,i,r,beta";
    let noq_meta = json!({ "schedule": [], "kind": "no_quarantine" });
    let opt_meta = json!({
        "schedule": window.schedule(),
        "kind": "optimal_window",
        "window_start": window.start,
        "window_case": window.case,
    });
    Ok(vec![
        write_csv(
            out,
            "simulate_no_quarantine.csv",
            cfg,
            &noq_meta,
            header,
            trajectory_rows(&no_quarantine),
        )?,
        write_csv(
            out,
            "simulate_optimal.csv",
            cfg,
            &opt_meta,
            header,
            trajectory_rows(&quarantined),
        )?,
    ])
}

/// JSON report of the optimal window, its roots, and the closed-form bounds.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let ic = cfg.integrator();
    let window = optimal_window(&params, cfg.i0, cfg.window, &ic)?;
    let bounds = Bounds::for_params(&params, cfg.i0, cfg.window);
    let payload = json!({
        "case": window.case,
        "start": window.start,
        "T": window.window,
        "r_inf": window.r_inf,
        "q_residual": window.q_residual,
        "peak_time": window.peak_time,
        "roots": window.roots,
        "epsilon0": bounds.epsilon0,
        "t_star": bounds.t_star,
    });
    Ok(vec![write_json(out, "optimize.json", cfg, &payload)?])
}

/// CSV of `(t0, r_inf)` over the start grid plus JSON metadata.
pub fn cmd_scan(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let ic = cfg.integrator();
    let grid = cfg
        .t0_grid()
        .map_err(|e| crate::Error::InvalidParams(e.0))?;
    let scan = scan_contiguous(&params, cfg.i0, cfg.window, &grid, &ic)?;

    let rows: Vec<String> = scan
        .axis
        .iter()
        .zip(&scan.r_inf)
        .map(|(t0, r)| format!("{},{}", fmt_f64(*t0), fmt_f64(*r)))
        .collect();
    let meta = json!({
        "grid": { "min": cfg.t0_min, "max": cfg.t0_max, "step": cfg.t0_step },
        "argmin": {
            "index": scan.argmin_index,
            "t0": scan.axis[scan.argmin_index],
            "r_inf": scan.r_inf[scan.argmin_index],
        },
    });
    Ok(vec![
        write_csv(out, "scan.csv", cfg, &meta, "t0,r_inf", rows)?,
        write_json(out, "scan.json", cfg, &meta)?,
    ])
}

/// CSV of `(r0n, ratio, r_inf)` over the sweep grids plus JSON metadata.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ic = cfg.integrator();
    let r0n_grid = cfg
        .r0n_grid()
        .map_err(|e| crate::Error::InvalidParams(e.0))?;
    let ratio_grid = cfg
        .ratio_grid()
        .map_err(|e| crate::Error::InvalidParams(e.0))?;
    let sweep = sweep_heatmap(cfg.gamma, cfg.window, cfg.i0, &r0n_grid, &ratio_grid, &ic)?;

    let rows: Vec<String> = sweep
        .axis
        .iter()
        .zip(&sweep.r_inf)
        .map(|(&(r0n, ratio), r)| format!("{},{},{}", fmt_f64(r0n), fmt_f64(ratio), fmt_f64(*r)))
        .collect();

    // Along a fixed r0n, a stronger quarantine (smaller ratio) should not
    // raise the optimal value; reported, not asserted.
    let n_ratio = ratio_grid.len();
    let mut violations = Vec::new();
    for (col, &r0n) in r0n_grid.iter().enumerate() {
        for k in 0..n_ratio.saturating_sub(1) {
            let low = sweep.r_inf[col * n_ratio + k];
            let high = sweep.r_inf[col * n_ratio + k + 1];
            if high < low - 1e-9 {
                violations.push(json!({
                    "r0n": r0n,
                    "ratio_low": ratio_grid[k],
                    "ratio_high": ratio_grid[k + 1],
                    "r_inf_low": low,
                    "r_inf_high": high,
                }));
            }
        }
    }

    let (r0n_best, ratio_best) = sweep.axis[sweep.argmin_index];
    let meta = json!({
        "r0n_grid": { "min": cfg.r0n_min, "max": cfg.r0n_max, "step": cfg.r0n_step },
        "ratio_grid": { "min": cfg.ratio_min, "max": cfg.ratio_max, "step": cfg.ratio_step },
        "argmin": {
            "index": sweep.argmin_index,
            "r0n": r0n_best,
            "ratio": ratio_best,
            "r_inf": sweep.r_inf[sweep.argmin_index],
        },
        "ratio_monotonicity_violations": violations,
    });
    Ok(vec![
        write_csv(out, "sweep.csv", cfg, &meta, "r0n,ratio,r_inf", rows)?,
        write_json(out, "sweep.json", cfg, &meta)?,
    ])
}

/// Evenly spaced level values spanning the phase-plane triangle.
fn default_c_fan(rho: f64) -> Vec<f64> {
    let (lo, hi) = if rho < 1.0 {
        // from the degenerate point at (rho, 0) up to the curve through
        // (rho, 1 - rho) on the s + i = 1 edge
        (rho * (1.0 - rho.ln()), 1.0 - rho * rho.ln())
    } else {
        (1.0, 1.0 + rho)
    };
    (0..12).map(|k| lo + (hi - lo) * k as f64 / 11.0).collect()
}

struct CurveDomain {
    s_lo: f64,
    s_hi: f64,
}

/// Susceptible range on which the level curve `s + i - rho ln s = c` stays
/// inside the simplex, or `None` if it misses it entirely.
fn curve_domain(c: f64, rho: f64) -> Option<CurveDomain> {
    let f = |s: f64| s - rho * s.ln() - c;
    let apex = rho.min(1.0);
    if f(apex) > 0.0 {
        return None;
    }
    // where the curve would cross the s + i = 1 edge
    let cap = if c <= 1.0 {
        1.0
    } else {
        ((1.0 - c) / rho).exp()
    };

    // lower endpoint: i = 0 on the decreasing branch of f
    let mut lo = 0.5 * apex;
    let mut guard = 0;
    while f(lo) <= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 1100 {
            return None;
        }
    }
    let mut hi = apex;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_lo = hi;

    let upper_limit = cap.min(1.0);
    let s_hi = if f(upper_limit) <= 0.0 {
        upper_limit
    } else {
        // i = 0 again on the increasing branch before the edge
        let mut lo2 = apex;
        let mut hi2 = upper_limit;
        for _ in 0..200 {
            let mid = 0.5 * (lo2 + hi2);
            if f(mid) <= 0.0 {
                lo2 = mid;
            } else {
                hi2 = mid;
            }
        }
        lo2
    };
    Some(CurveDomain { s_lo, s_hi })
}

const PHASE_SAMPLES: usize = 512;

/// CSV of points on the phase-plane level curves.
pub fn cmd_phase(cfg: &RunConfig, out: &Path, trajectory_curves: bool) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let rho = params.rho_n();

    let (c_values, c_source) = if trajectory_curves {
        // Curves realized by the optimally windowed run: the level entering
        // the window and the level leaving it.
        let ic = cfg.integrator();
        let initial = EpidemicState::initial(cfg.i0)?;
        let window = optimal_window(&params, cfg.i0, cfg.window, &ic)?;
        let sched = window.schedule();
        let run = integrate(&params, &sched, &initial, sched.end(), &ic)?;
        let c_pre = conserved_quantity(&initial, rho)?;
        let c_post = conserved_quantity(run.last(), rho)?;
        (vec![c_pre, c_post], "trajectory")
    } else if let Some(values) = &cfg.c_values {
        (values.clone(), "explicit")
    } else {
        (default_c_fan(rho), "default_fan")
    };

    let mut rows = Vec::new();
    let mut empty_curves = Vec::new();
    for &c in &c_values {
        match curve_domain(c, rho) {
            None => empty_curves.push(c),
            Some(domain) => {
                let span = domain.s_hi - domain.s_lo;
                let n = if span < 1e-12 { 1 } else { PHASE_SAMPLES };
                for k in 0..n {
                    let s = if n == 1 {
                        domain.s_hi
                    } else {
                        domain.s_hi - span * k as f64 / (n - 1) as f64
                    };
                    let i = (c - s + rho * s.ln()).max(0.0);
                    rows.push(format!("{},{},{}", fmt_f64(c), fmt_f64(s), fmt_f64(i)));
                }
            }
        }
    }

    let meta = json!({
        "rho_n": rho,
        "c_values": c_values,
        "c_source": c_source,
        "samples_per_curve": PHASE_SAMPLES,
        "empty_curves": empty_curves,
    });
    Ok(vec![write_csv(
        out,
        "phase.csv",
        cfg,
        &meta,
        "c,s,i",
        rows,
    )?])
}

/// JSON witness for the order-preserving counterexample.
pub fn cmd_counterexample(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ic = cfg.integrator();
    let witness = crate::analysis::build_counterexample(None, &ic)?;
    Ok(vec![write_json(out, "counterexample.json", cfg, &witness)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_fan_spans_the_triangle() {
        let rho: f64 = 1.0 / 2.4;
        let fan = default_c_fan(rho);
        assert_eq!(fan.len(), 12);
        assert!((fan[0] - rho * (1.0 - rho.ln())).abs() < 1e-12);
        assert!((fan[11] - (1.0 - rho * rho.ln())).abs() < 1e-12);
    }

    #[test]
    fn curve_through_the_disease_free_corner() {
        // c = 1: the curve reaches (1, 0) exactly.
        let rho = 1.0 / 2.4;
        let domain = curve_domain(1.0, rho).unwrap();
        assert!((domain.s_hi - 1.0).abs() < 1e-9);
        let i_at_hi = 1.0 - domain.s_hi + rho * domain.s_hi.ln();
        assert!(i_at_hi.abs() < 1e-9);
    }

    #[test]
    fn infeasible_level_has_no_curve() {
        let rho = 1.0 / 2.4;
        // below the minimum of s - rho ln s
        assert!(curve_domain(0.5, rho).is_none());
    }

    #[test]
    fn curve_points_satisfy_the_defining_equation() {
        let rho = 1.0 / 2.4;
        for c in default_c_fan(rho) {
            if let Some(domain) = curve_domain(c, rho) {
                for s in [domain.s_lo, 0.5 * (domain.s_lo + domain.s_hi), domain.s_hi] {
                    let i = (c - s + rho * s.ln()).max(0.0);
                    let residual = (s + i - rho * s.ln() - c).abs();
                    assert!(residual <= 1e-10, "residual {residual:e} at c={c}, s={s}");
                    assert!(s + i <= 1.0 + 1e-9);
                }
            }
        }
    }
}
