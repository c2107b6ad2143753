//! Configuration resolution and command implementations for the `qsched`
//! binary.
//!
//! Settings resolve with flag > file > default precedence. Raw rates
//! (`beta_n`, `beta_q`) and reproduction numbers (`r0n`, `r0q`) are mutually
//! exclusive ways of fixing the same two parameters; supplying both is a
//! configuration error.

pub mod commands;
pub mod output;
pub mod verify;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::integrator::IntegratorConfig;
use crate::sir::EpidemicParams;

/// A configuration-layer error; always maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// One layer of optional settings: either the config file or the command
/// line. Unknown fields in a file are rejected with a line-precise message.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub beta_n: Option<f64>,
    pub beta_q: Option<f64>,
    pub gamma: Option<f64>,
    pub r0n: Option<f64>,
    pub r0q: Option<f64>,
    pub i0: Option<f64>,
    #[serde(rename = "T")]
    pub window: Option<f64>,
    pub step: Option<f64>,
    pub extinction_threshold: Option<f64>,
    pub horizon_cap: Option<f64>,
    pub horizon: Option<f64>,
    pub t0_min: Option<f64>,
    pub t0_max: Option<f64>,
    pub t0_step: Option<f64>,
    pub r0n_min: Option<f64>,
    pub r0n_max: Option<f64>,
    pub r0n_step: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_step: Option<f64>,
    pub m: Option<usize>,
    pub brute_grid_step: Option<f64>,
    pub delta: Option<f64>,
    pub c_values: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Overrides {
    /// Overlays `layer` on top of `self`; `layer` wins where set.
    pub fn overlay(self, layer: Overrides) -> Overrides {
        Overrides {
            beta_n: layer.beta_n.or(self.beta_n),
            beta_q: layer.beta_q.or(self.beta_q),
            gamma: layer.gamma.or(self.gamma),
            r0n: layer.r0n.or(self.r0n),
            r0q: layer.r0q.or(self.r0q),
            i0: layer.i0.or(self.i0),
            window: layer.window.or(self.window),
            step: layer.step.or(self.step),
            extinction_threshold: layer.extinction_threshold.or(self.extinction_threshold),
            horizon_cap: layer.horizon_cap.or(self.horizon_cap),
            horizon: layer.horizon.or(self.horizon),
            t0_min: layer.t0_min.or(self.t0_min),
            t0_max: layer.t0_max.or(self.t0_max),
            t0_step: layer.t0_step.or(self.t0_step),
            r0n_min: layer.r0n_min.or(self.r0n_min),
            r0n_max: layer.r0n_max.or(self.r0n_max),
            r0n_step: layer.r0n_step.or(self.r0n_step),
            ratio_min: layer.ratio_min.or(self.ratio_min),
            ratio_max: layer.ratio_max.or(self.ratio_max),
            ratio_step: layer.ratio_step.or(self.ratio_step),
            m: layer.m.or(self.m),
            brute_grid_step: layer.brute_grid_step.or(self.brute_grid_step),
            delta: layer.delta.or(self.delta),
            c_values: layer.c_values.or(self.c_values),
            seed: layer.seed.or(self.seed),
            threads: layer.threads.or(self.threads),
        }
    }
}

/// Fully resolved run configuration, echoed verbatim into every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub beta_n: f64,
    pub beta_q: f64,
    pub gamma: f64,
    pub r0_n: f64,
    pub r0_q: f64,
    pub i0: f64,
    #[serde(rename = "T")]
    pub window: f64,
    pub step: f64,
    pub extinction_threshold: f64,
    pub horizon_cap: f64,
    pub horizon: f64,
    pub t0_min: f64,
    pub t0_max: f64,
    pub t0_step: f64,
    pub r0n_min: f64,
    pub r0n_max: f64,
    pub r0n_step: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ratio_step: f64,
    pub m: usize,
    pub brute_grid_step: f64,
    pub delta: f64,
    pub c_values: Option<Vec<f64>>,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Resolves the final configuration from an optional file and the
    /// command-line layer.
    pub fn resolve(
        config_path: Option<&Path>,
        cli_layer: Overrides,
    ) -> Result<RunConfig, ConfigError> {
        let file_layer = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<Overrides>(&text)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => Overrides::default(),
        };
        let merged = file_layer.overlay(cli_layer);

        let gamma = merged.gamma.unwrap_or(1.0 / 14.0);
        let gave_betas = merged.beta_n.is_some() || merged.beta_q.is_some();
        let gave_r0 = merged.r0n.is_some() || merged.r0q.is_some();
        if gave_betas && gave_r0 {
            return Err(ConfigError(
                "raw rates (beta_n/beta_q) and reproduction numbers (r0n/r0q) \
                 are mutually exclusive"
                    .into(),
            ));
        }
        let (beta_n, beta_q) = if gave_betas {
            match (merged.beta_n, merged.beta_q) {
                (Some(bn), Some(bq)) => (bn, bq),
                _ => {
                    return Err(ConfigError(
                        "both beta_n and beta_q are required when raw rates are given".into(),
                    ))
                }
            }
        } else {
            let r0n = merged.r0n.unwrap_or(2.1);
            let r0q = merged.r0q.unwrap_or(0.8);
            (r0n * gamma, r0q * gamma)
        };
        let params =
            EpidemicParams::new(beta_n, beta_q, gamma).map_err(|e| ConfigError(e.to_string()))?;

        let config = RunConfig {
            beta_n,
            beta_q,
            gamma,
            r0_n: params.r0_n(),
            r0_q: params.r0_q(),
            i0: merged.i0.unwrap_or(1e-4),
            window: merged.window.unwrap_or(30.0),
            step: merged.step.unwrap_or(0.01),
            extinction_threshold: merged.extinction_threshold.unwrap_or(1e-10),
            horizon_cap: merged.horizon_cap.unwrap_or(10_000.0),
            horizon: merged.horizon.unwrap_or(600.0),
            t0_min: merged.t0_min.unwrap_or(0.0),
            t0_max: merged.t0_max.unwrap_or(300.0),
            t0_step: merged.t0_step.unwrap_or(1.0),
            r0n_min: merged.r0n_min.unwrap_or(1.1),
            r0n_max: merged.r0n_max.unwrap_or(4.0),
            r0n_step: merged.r0n_step.unwrap_or(0.1),
            ratio_min: merged.ratio_min.unwrap_or(0.1),
            ratio_max: merged.ratio_max.unwrap_or(0.95),
            ratio_step: merged.ratio_step.unwrap_or(0.05),
            m: merged.m.unwrap_or(2),
            brute_grid_step: merged.brute_grid_step.unwrap_or(2.5),
            delta: merged.delta.unwrap_or(0.1),
            c_values: merged.c_values,
            seed: merged.seed.unwrap_or(42),
            threads: merged.threads,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| Err(ConfigError(msg));
        if !(self.i0 > 0.0 && self.i0 < 1.0) {
            return err(format!("i0 must lie in (0, 1), got {}", self.i0));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return err(format!("T must be positive, got {}", self.window));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return err(format!("horizon must be nonnegative, got {}", self.horizon));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return err(format!("delta must be positive, got {}", self.delta));
        }
        self.integrator()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.t0_grid()?;
        self.r0n_grid()?;
        self.ratio_grid()?;
        Ok(())
    }

    /// Validated at resolution; reconstructing cannot fail.
    pub fn params(&self) -> EpidemicParams {
        EpidemicParams::new(self.beta_n, self.beta_q, self.gamma)
            .expect("parameters were validated at resolution")
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            extinction_threshold: self.extinction_threshold,
            horizon_cap: self.horizon_cap,
        }
    }

    pub fn t0_grid(&self) -> Result<Vec<f64>, ConfigError> {
        build_grid(self.t0_min, self.t0_max, self.t0_step)
    }

    pub fn r0n_grid(&self) -> Result<Vec<f64>, ConfigError> {
        build_grid(self.r0n_min, self.r0n_max, self.r0n_step)
    }

    pub fn ratio_grid(&self) -> Result<Vec<f64>, ConfigError> {
        build_grid(self.ratio_min, self.ratio_max, self.ratio_step)
    }
}

/// Inclusive arithmetic grid `min, min + step, ...` up to `max` (with a
/// relative slack so a max that is an exact multiple lands on the grid).
pub fn build_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, ConfigError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(ConfigError(format!(
            "grid step must be positive, got {step}"
        )));
    }
    if !(max >= min && min.is_finite() && max.is_finite()) {
        return Err(ConfigError(format!(
            "grid bounds must satisfy min <= max, got [{min}, {max}]"
        )));
    }
    let n = ((max - min) / step * (1.0 + 1e-9) + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| min + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_the_standard_configuration() {
        let cfg = RunConfig::resolve(None, Overrides::default()).unwrap();
        assert!((cfg.gamma - 1.0 / 14.0).abs() < 1e-15);
        assert!((cfg.r0_n - 2.1).abs() < 1e-12);
        assert!((cfg.r0_q - 0.8).abs() < 1e-12);
        assert_eq!(cfg.window, 30.0);
        assert_eq!(cfg.i0, 1e-4);
        assert_eq!(cfg.step, 0.01);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn raw_rates_and_r0_are_mutually_exclusive() {
        let layer = Overrides {
            beta_n: Some(0.2),
            r0n: Some(2.0),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, layer).is_err());
    }

    #[test]
    fn raw_rates_require_both_betas() {
        let layer = Overrides {
            beta_n: Some(0.2),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, layer).is_err());
        let layer = Overrides {
            beta_n: Some(0.2),
            beta_q: Some(0.05),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(None, layer).unwrap();
        assert_eq!(cfg.beta_n, 0.2);
        assert_eq!(cfg.beta_q, 0.05);
    }

    #[test]
    fn corrupted_rate_ordering_is_rejected() {
        let layer = Overrides {
            beta_n: Some(0.05),
            beta_q: Some(0.2),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, layer).is_err());
    }

    #[test]
    fn grid_includes_an_exact_multiple_endpoint() {
        let grid = build_grid(1.1, 4.0, 0.1).unwrap();
        assert_eq!(grid.len(), 30);
        assert!((grid.last().unwrap() - 4.0).abs() < 1e-9);
        let single = build_grid(2.0, 2.0, 0.5).unwrap();
        assert_eq!(single, vec![2.0]);
    }

    #[test]
    fn flag_layer_overrides_file_layer() {
        let file = Overrides {
            i0: Some(0.01),
            seed: Some(7),
            ..Overrides::default()
        };
        let flags = Overrides {
            i0: Some(0.02),
            ..Overrides::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.i0, Some(0.02));
        assert_eq!(merged.seed, Some(7));
    }
}
