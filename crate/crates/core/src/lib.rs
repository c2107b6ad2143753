//! Quarantine scheduling for the SIR epidemic model.
//!
//! Given a transmission rate that can be temporarily reduced from `beta_n` to
//! `beta_q` for a fixed total duration `T`, this crate computes the schedule
//! minimizing the final epidemic size `R(inf)`, locates the optimal single
//! window through the integral condition on
//! `Q = ∫ (gamma - beta_n * S) / I dt` along quarantined dynamics, and ships
//! executable checks for the structural facts the optimizer relies on
//! (single-window dominance, shift improvement, order preservation and its
//! counterexample, monotone tails).
//!
//! The `qsched` binary exposes the same machinery as subcommands producing
//! reproducible CSV/JSON artifacts.
//!
//! ```
//! use qsched::{optimal_window, EpidemicParams, IntegratorConfig, WindowCase};
//!
//! // recovery in 14 days, R0 of 2.1 normally and 0.8 under quarantine
//! let params = EpidemicParams::from_r0(2.1, 0.8, 1.0 / 14.0)?;
//! let config = IntegratorConfig { step: 0.05, ..IntegratorConfig::default() };
//!
//! // best placement of a 30-day window for a seed fraction of 1e-4
//! let window = optimal_window(&params, 1e-4, 30.0, &config)?;
//! assert_eq!(window.case, WindowCase::InteriorRoot);
//! assert!((window.r_inf - 0.70).abs() < 0.01);
//! # Ok::<(), qsched::Error>(())
//! ```

pub mod analysis;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod optimizer;
pub mod sir;

pub use error::{Error, Result};
pub use integrator::{
    integrate, integrate_to_extinction, r_inf_for_schedule, IntegratorConfig, SegmentBeta,
    Trajectory,
};
pub use sir::{
    conserved_quantity, final_size, g, sir_rhs, EpidemicParams, EpidemicState, FinalSize, Interval,
    Schedule,
};

pub use analysis::{
    build_counterexample, epsilon0_estimate, optimal_window, q_integral, t_star,
    verify_monotone_tail, verify_order_preserving, verify_shift_lemma, Bounds, OptimalWindow,
    QResult, WindowCase,
};
pub use optimizer::{
    brute_force_multi_interval, scan_contiguous, sweep_heatmap, BruteForceResult, ScanResult,
};
