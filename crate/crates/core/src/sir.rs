//! SIR dynamics with a temporarily reducible transmission rate.
//!
//! The population is split into susceptible, infectious and removed fractions
//! evolving under
//!
//! ```text
//! s' = -beta * s * i,   i' = beta * s * i - gamma * i,   r' = gamma * i,
//! ```
//!
//! where `beta` equals the normal rate `beta_n` outside quarantine intervals
//! and the reduced rate `beta_q` inside them. On any span where `beta` is
//! constant the quantity `i + s - (gamma/beta) * ln s` is conserved, which
//! reduces the limiting epidemic size to a one-dimensional transcendental
//! equation solved by [`final_size`].

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for the `s + i + r = 1` simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Transmission and recovery rates of the two-regime system.
///
/// Derived quantities (`rho_n`, `rho_q` and the reproduction numbers) are
/// recomputed from the stored rates on every call so they can never drift
/// out of sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpidemicParams {
    beta_n: f64,
    beta_q: f64,
    gamma: f64,
}

impl EpidemicParams {
    /// Builds parameters from raw rates, rejecting anything outside
    /// `0 < beta_q < beta_n`, `gamma > 0`.
    pub fn new(beta_n: f64, beta_q: f64, gamma: f64) -> Result<Self> {
        if !beta_n.is_finite() || !beta_q.is_finite() || !gamma.is_finite() {
            return Err(Error::invalid_params("rates must be finite"));
        }
        if gamma <= 0.0 {
            return Err(Error::invalid_params(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if beta_q <= 0.0 || beta_q >= beta_n {
            return Err(Error::invalid_params(format!(
                "rates must satisfy 0 < beta_q < beta_n, got beta_q={beta_q}, beta_n={beta_n}"
            )));
        }
        Ok(Self {
            beta_n,
            beta_q,
            gamma,
        })
    }

    /// Builds parameters from reproduction numbers: `beta = r0 * gamma`.
    pub fn from_r0(r0_n: f64, r0_q: f64, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::invalid_params(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Self::new(r0_n * gamma, r0_q * gamma, gamma)
    }

    /// Normal transmission rate (1/day).
    pub fn beta_n(&self) -> f64 {
        self.beta_n
    }

    /// Transmission rate while quarantine measures are active (1/day).
    pub fn beta_q(&self) -> f64 {
        self.beta_q
    }

    /// Recovery rate (1/day).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Herd-immunity threshold `gamma / beta_n`; infections decline under
    /// normal transmission once `s` falls below it.
    pub fn rho_n(&self) -> f64 {
        self.gamma / self.beta_n
    }

    /// Quarantine-regime threshold `gamma / beta_q`.
    pub fn rho_q(&self) -> f64 {
        self.gamma / self.beta_q
    }

    /// Basic reproduction number under normal transmission.
    pub fn r0_n(&self) -> f64 {
        self.beta_n / self.gamma
    }

    /// Basic reproduction number under quarantine.
    pub fn r0_q(&self) -> f64 {
        self.beta_q / self.gamma
    }
}

/// A point of the epidemic on the unit simplex at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpidemicState {
    pub t: f64,
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl EpidemicState {
    /// Validating constructor: all fractions nonnegative and summing to one
    /// within [`SIMPLEX_TOL`].
    pub fn new(t: f64, s: f64, i: f64, r: f64) -> Result<Self> {
        let state = Self { t, s, i, r };
        if !(t.is_finite() && s.is_finite() && i.is_finite() && r.is_finite()) {
            return Err(Error::invalid_params("state components must be finite"));
        }
        if s < 0.0 || i < 0.0 || r < 0.0 {
            return Err(Error::invalid_params(format!(
                "state fractions must be nonnegative, got s={s}, i={i}, r={r}"
            )));
        }
        if state.simplex_residual() > SIMPLEX_TOL {
            return Err(Error::invalid_params(format!(
                "state must lie on the unit simplex, |s+i+r-1| = {:e}",
                state.simplex_residual()
            )));
        }
        Ok(state)
    }

    /// Standard outbreak initial data at `t = 0`: fraction `i0` infectious,
    /// everyone else susceptible, nobody removed.
    pub fn initial(i0: f64) -> Result<Self> {
        if !(i0 > 0.0 && i0 < 1.0) {
            return Err(Error::invalid_params(format!(
                "initial infectious fraction must lie in (0, 1), got {i0}"
            )));
        }
        Ok(Self {
            t: 0.0,
            s: 1.0 - i0,
            i: i0,
            r: 0.0,
        })
    }

    /// Distance from the unit simplex, `|s + i + r - 1|`.
    pub fn simplex_residual(&self) -> f64 {
        (self.s + self.i + self.r - 1.0).abs()
    }
}

/// Right-hand side on raw components; shared by the integrator hot loops.
#[inline]
pub(crate) fn rhs(s: f64, i: f64, beta: f64, gamma: f64) -> (f64, f64, f64) {
    let infection = beta * s * i;
    let recovery = gamma * i;
    (-infection, infection - recovery, recovery)
}

/// SIR vector field `(ds, di, dr)` for a constant transmission rate.
///
/// Total: `ds + di + dr = 0` in exact arithmetic.
pub fn sir_rhs(state: &EpidemicState, beta: f64, gamma: f64) -> (f64, f64, f64) {
    rhs(state.s, state.i, beta, gamma)
}

/// The quantity `i + s - rho * ln s`, constant along any trajectory with
/// constant transmission rate `beta = gamma / rho`.
pub fn conserved_quantity(state: &EpidemicState, rho: f64) -> Result<f64> {
    if state.s <= 0.0 {
        return Err(Error::domain(format!(
            "conserved quantity needs s > 0, got s={}",
            state.s
        )));
    }
    Ok(state.i + state.s - rho * state.s.ln())
}

/// Phase-plane potential `g(x) = -x + rho * ln x` for `x > 0`.
///
/// Satisfies `conserved_quantity(state, rho) = i - g(s, rho)` identically,
/// and attains its unique maximum at `x = rho`.
pub fn g(x: f64, rho: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::domain(format!("g needs x > 0, got x={x}")));
    }
    Ok(-x + rho * x.ln())
}

/// Limiting epidemic size computed from a post-quarantine state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalSize {
    /// Limiting susceptible fraction.
    pub s_inf: f64,
    /// Limiting removed fraction, always exactly `1 - s_inf`.
    pub r_inf: f64,
    /// Residual of the transcendental equation at the returned root.
    pub residual: f64,
    /// Set when the input was the degenerate equilibrium `i = 0`, `s > rho_n`,
    /// which the dynamics never reach from admissible initial data.
    pub unstable_equilibrium: bool,
}

/// Solves for `S(inf)` assuming the normal rate `beta_n` applies for all
/// later time.
///
/// The root solves `x - rho_n ln x = s + i - rho_n ln s` on the stable branch
/// `x <= min(s, rho_n)`; on that interval the map is strictly decreasing so
/// the bracketed root is unique. Bisection narrows the bracket and Newton
/// polishes until the residual is at most `1e-12`.
pub fn final_size(state: &EpidemicState, params: &EpidemicParams) -> Result<FinalSize> {
    let (s, i) = (state.s, state.i);
    if s <= 0.0 {
        return Err(Error::domain(format!("final size needs s > 0, got s={s}")));
    }
    if i < 0.0 {
        return Err(Error::domain(format!("final size needs i >= 0, got i={i}")));
    }
    let rho = params.rho_n();

    if i == 0.0 {
        // Already an equilibrium. Above the herd-immunity threshold it is an
        // unstable one; flag it instead of hunting for a different root.
        return Ok(FinalSize {
            s_inf: s,
            r_inf: 1.0 - s,
            residual: 0.0,
            unstable_equilibrium: s > rho,
        });
    }

    let c = s + i - rho * s.ln();
    let f = |x: f64| x - rho * x.ln() - c;
    let df = |x: f64| 1.0 - rho / x;

    // f(min(s, rho)) <= -i < 0 and f -> +inf as x -> 0+, so halving the lower
    // endpoint always produces a bracket containing the unique stable root.
    let mut hi = s.min(rho);
    let mut lo = 0.5 * hi;
    let mut guard = 0;
    while f(lo) <= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 1100 {
            return Err(Error::nonconvergence("final-size bracketing", f(lo)));
        }
    }

    const MAX_ITER: usize = 200;
    const RESIDUAL_TOL: f64 = 1e-12;

    let mut x = 0.5 * (lo + hi);
    let mut fx = f(x);
    for iter in 0..MAX_ITER {
        if fx.abs() <= RESIDUAL_TOL {
            return Ok(FinalSize {
                s_inf: x,
                r_inf: 1.0 - x,
                residual: fx,
                unstable_equilibrium: false,
            });
        }
        // Keep the bracket current, then prefer a Newton step when it stays
        // inside; fall back to bisection otherwise.
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / df(x);
        x = if iter >= 8 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fx = f(x);
    }
    if fx.abs() <= RESIDUAL_TOL {
        return Ok(FinalSize {
            s_inf: x,
            r_inf: 1.0 - x,
            residual: fx,
            unstable_equilibrium: false,
        });
    }
    Err(Error::nonconvergence("final-size solve", fx))
}

/// A single quarantine interval `[start, start + length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub start: f64,
    pub length: f64,
}

impl Interval {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }
}

/// A finite union of disjoint quarantine intervals.
///
/// Intervals must be sorted and non-overlapping; back-to-back intervals are
/// accepted since they integrate identically to their union. `total_length`
/// is always the exact sum of the interval lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    intervals: Vec<Interval>,
    total_length: f64,
}

impl Schedule {
    /// The empty schedule: normal transmission at all times.
    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
            total_length: 0.0,
        }
    }

    /// A single contiguous window `[start, start + length]`.
    pub fn contiguous(start: f64, length: f64) -> Result<Self> {
        Self::new(vec![(start, length)])
    }

    /// Validates and assembles a schedule from `(start, length)` pairs.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev_end = 0.0_f64;
        for (k, &(start, length)) in intervals.iter().enumerate() {
            if !start.is_finite() || !length.is_finite() {
                return Err(Error::invalid_schedule("interval bounds must be finite"));
            }
            if start < 0.0 {
                return Err(Error::invalid_schedule(format!(
                    "interval {k} starts at {start} < 0"
                )));
            }
            if length <= 0.0 {
                return Err(Error::invalid_schedule(format!(
                    "interval {k} has nonpositive length {length}"
                )));
            }
            if k > 0 && start < prev_end {
                return Err(Error::invalid_schedule(format!(
                    "interval {k} starting at {start} overlaps or precedes the previous \
                     interval ending at {prev_end}"
                )));
            }
            prev_end = start + length;
        }
        let total_length = intervals.iter().map(|&(_, len)| len).sum();
        Ok(Self {
            intervals: intervals
                .into_iter()
                .map(|(start, length)| Interval { start, length })
                .collect(),
            total_length,
        })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Total quarantine length `T`.
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// End of the last interval, or 0 for the empty schedule.
    pub fn end(&self) -> f64 {
        self.intervals.last().map_or(0.0, Interval::end)
    }

    /// A copy of this schedule with `[start, start + length]` appended.
    pub fn with_appended(&self, start: f64, length: f64) -> Result<Self> {
        let mut intervals: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .map(|iv| (iv.start, iv.length))
            .collect();
        intervals.push((start, length));
        Self::new(intervals)
    }
}
