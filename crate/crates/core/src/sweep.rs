//! One-parameter sweeps over a config field.
//!
//! Every grid point reuses the base seed, so neighbouring points share
//! their random streams and curves come out smooth.

use std::io::{self, Write};

use crate::config::{set_numeric_field, ConfigError, ConfigFile, ResolvedConfig};
use crate::experiment::{run_experiment_streaming, RunOptions};
use crate::pipeline::{verdict, PipelineError};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Dotted path into the config, e.g. `state.p0` or
    /// `detector.detectors.*.observation_time_ns`.
    pub field: String,
    pub from: f64,
    pub to: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.from.is_finite() && self.to.is_finite()) {
            return Err(ConfigError::new("sweep", "range endpoints must be finite"));
        }
        if self.from == self.to {
            return Err(ConfigError::new("sweep", "zero-length range"));
        }
        if self.steps < 2 {
            return Err(ConfigError::new("sweep", "need at least 2 steps"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.to
                } else {
                    self.from + (self.to - self.from) * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub disagreement_fraction: f64,
    pub m0_fraction: f64,
    pub m1_fraction: f64,
    pub log_odds: f64,
    /// `X/dx` or `D` per detector; empty for ideal detectors.
    pub separations: Vec<f64>,
}

/// The config at one grid point, resolved and validated.
pub fn config_at(base: &ConfigFile, spec: &SweepSpec, value: f64) -> Result<ResolvedConfig, ConfigError> {
    let mut v = base.to_value();
    set_numeric_field(&mut v, &spec.field, value)?;
    ConfigFile::from_value(v)?.resolve()
}

/// Runs one experiment per grid point. Every point is resolved before any
/// simulation starts, so a bad field or value fails fast.
pub fn run_sweep(
    base: &ConfigFile,
    spec: &SweepSpec,
    options: RunOptions,
) -> Result<Vec<SweepRow>, PipelineError> {
    spec.validate()?;
    let values = spec.values();
    let configs = values
        .iter()
        .map(|&x| config_at(base, spec, x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (value, cfg) in values.into_iter().zip(&configs) {
        let mut outcomes: Vec<Vec<u8>> = Vec::with_capacity(cfg.experiment.n_trials as usize);
        let summary = run_experiment_streaming(&cfg.experiment, options, |r| {
            outcomes.push(r.outcomes.clone());
            Ok(())
        })?;
        let v = verdict(cfg, outcomes.iter().map(Vec::as_slice))?;
        let m = summary.n_trials as f64;
        rows.push(SweepRow {
            value,
            disagreement_fraction: summary.disagreement_fraction(),
            m0_fraction: summary.m0_unanimous_zero as f64 / m,
            m1_fraction: summary.m1_unanimous_one as f64 / m,
            log_odds: v.log_odds,
            separations: cfg.experiment.detector.separations().unwrap_or_default(),
        });
    }
    Ok(rows)
}

/// Tidy CSV: `value,disagreement_fraction,m0_fraction,m1_fraction,log_odds`
/// followed by `separation_1..separation_N` for physical detectors.
pub fn write_sweep_csv<W: Write>(mut out: W, field: &str, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "# simulmeas sweep field={field}")?;
    let n_sep = rows.first().map_or(0, |r| r.separations.len());
    let mut header = String::from("value,disagreement_fraction,m0_fraction,m1_fraction,log_odds");
    for a in 1..=n_sep {
        header.push_str(&format!(",separation_{a}"));
    }
    writeln!(out, "{header}")?;
    for r in rows {
        write!(
            out,
            "{},{},{},{},{}",
            r.value, r.disagreement_fraction, r.m0_fraction, r.m1_fraction, r.log_odds
        )?;
        for s in &r.separations {
            write!(out, ",{s}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn spec(field: &str, from: f64, to: f64, steps: usize) -> SweepSpec {
        SweepSpec {
            field: field.into(),
            from,
            to,
            steps,
        }
    }

    #[test]
    fn grid_includes_endpoints() {
        let v = spec("state.p0", 0.1, 0.9, 9).values();
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[8], 0.9);
        assert!((v[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ranges_rejected() {
        assert!(spec("state.p0", 0.5, 0.5, 5).validate().is_err());
        assert!(spec("state.p0", 0.1, 0.5, 1).validate().is_err());
        assert!(spec("state.p0", 0.1, f64::NAN, 3).validate().is_err());
    }

    #[test]
    fn unknown_field_fails_before_running() {
        let base = ConfigFile::from_value(json!({
            "state": {"p0": 0.5},
            "scenario": {"kind": "binomial"},
            "detector": {"model": "ideal"},
            "n_detectors": 2,
            "n_trials": 10,
            "seed": 1
        }))
        .unwrap();
        let e = run_sweep(&base, &spec("state.q0", 0.1, 0.9, 3), RunOptions::default()).unwrap_err();
        assert!(matches!(e, PipelineError::Config(_)), "{e}");
    }
}
