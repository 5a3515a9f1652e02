//! End-to-end steps shared by the command-line tool and the sweep driver.

use thiserror::Error;

use crate::config::{ConfigError, ResolvedConfig};
use crate::experiment::{DetectorModel, ExperimentError};
use crate::inference::{decide, required_trials, ErrorModel, InferenceError, PatternCounts};
use crate::output::{
    DetectorDiagnostic, DiscriminabilityReport, RecordsError, RequiredTrialsRow, VerdictReport,
};
use crate::oscillator;
use crate::qpc;

pub const REPORT_ALPHAS: [f64; 3] = [0.05, 0.01, 0.001];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Records(#[from] RecordsError),
    /// The detector model cannot produce meaningful outcomes.
    #[error(transparent)]
    Model(#[from] ExperimentError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Misread-aware error model for the configured detectors.
pub fn error_model(config: &ResolvedConfig) -> Result<ErrorModel, PipelineError> {
    let detector = &config.experiment.detector;
    detector.check_readout()?;
    let eps = detector.misread_estimates(config.experiment.n_detectors)?;
    Ok(ErrorModel::new(eps)?)
}

fn required_or_none(
    config: &ResolvedConfig,
    alpha: f64,
    err: &ErrorModel,
) -> Result<Option<u64>, PipelineError> {
    match required_trials(config.experiment.probabilities(), alpha, err) {
        Ok(m) => Ok(Some(m)),
        Err(InferenceError::NoDiscrimination) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Scenario verdict for a set of outcome patterns under the configured state,
/// detectors and decision rule.
pub fn verdict<'a, I>(config: &ResolvedConfig, outcomes: I) -> Result<VerdictReport, PipelineError>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let err = error_model(config)?;
    let counts = PatternCounts::from_outcomes(outcomes)?;
    let v = decide(
        &counts,
        config.experiment.probabilities(),
        &err,
        &config.inference.rule(),
    )?;
    let alpha = config.inference.alpha;
    let required = required_or_none(config, alpha, &err)?;
    Ok(VerdictReport::new(&v, required, alpha))
}

/// Per-detector separation, misread estimates and required-trial table.
pub fn discriminability_report(config: &ResolvedConfig) -> Result<DiscriminabilityReport, PipelineError> {
    let threshold = config.reliable_threshold.unwrap_or(0.0);
    let (measure, detectors): (&str, Vec<DetectorDiagnostic>) = match &config.experiment.detector {
        DetectorModel::Ideal => {
            return Err(ConfigError::new(
                "detector.model",
                "discriminability needs a physical detector model (oscillator or qpc)",
            )
            .into())
        }
        DetectorModel::Oscillator { detectors, .. } => (
            "X/dx",
            detectors
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let ratio = oscillator::distinguishability_ratio(p);
                    DetectorDiagnostic {
                        detector: i + 1,
                        separation: ratio,
                        misread: oscillator::misread_probability(p),
                        misread_bound: None,
                        reliable: ratio >= threshold,
                    }
                })
                .collect(),
        ),
        DetectorModel::Qpc {
            detectors,
            constants,
            rule,
            ..
        } => (
            "D",
            detectors
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let d = qpc::discriminability(p, constants);
                    let misread = match qpc::misread_probabilities(p, constants, *rule) {
                        Ok([e0, e1]) => 0.5 * (e0 + e1),
                        Err(_) => 0.5,
                    };
                    DetectorDiagnostic {
                        detector: i + 1,
                        separation: d,
                        misread,
                        misread_bound: Some(qpc::misread_bound(p, constants)),
                        reliable: d >= threshold,
                    }
                })
                .collect(),
        ),
    };
    let err = ErrorModel::new(detectors.iter().map(|d| d.misread).collect()).ok();
    let mut table = Vec::with_capacity(REPORT_ALPHAS.len());
    for alpha in REPORT_ALPHAS {
        let m_required = match &err {
            Some(err) => required_or_none(config, alpha, err)?,
            None => None,
        };
        table.push(RequiredTrialsRow { alpha, m_required });
    }
    Ok(DiscriminabilityReport {
        model: config.experiment.detector.name().to_string(),
        separation_measure: measure.to_string(),
        reliable_threshold: threshold,
        p0: config.experiment.probabilities().p0(),
        detectors,
        required_trials: table,
        warnings: config.warnings.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;
    use crate::experiment::run_experiment;
    use crate::inference::Decision;
    use serde_json::json;

    fn resolve(v: serde_json::Value) -> ResolvedConfig {
        ConfigFile::from_value(v).unwrap().resolve().unwrap()
    }

    fn ideal(kind: &str, p0: f64) -> ResolvedConfig {
        resolve(json!({
            "state": {"p0": p0},
            "scenario": {"kind": kind},
            "detector": {"model": "ideal"},
            "n_detectors": 2,
            "n_trials": 200,
            "seed": 11
        }))
    }

    #[test]
    fn verdicts_follow_the_generating_law() {
        for (kind, expected) in [("unanimous", Decision::Unanimous), ("binomial", Decision::Binomial)] {
            let cfg = ideal(kind, 0.5);
            let (records, _) = run_experiment(&cfg.experiment).unwrap();
            let v = verdict(&cfg, records.iter().map(|r| r.outcomes.as_slice())).unwrap();
            assert_eq!(v.decision, expected);
            assert_eq!(v.M_used, 200);
            // (1 - 1/2)^M <= 0.01 first holds at M = 7.
            assert_eq!(v.M_required_alpha, Some(7));
        }
    }

    #[test]
    fn oscillator_without_coupling_is_unreliable() {
        let cfg = resolve(json!({
            "state": {"p0": 0.5},
            "scenario": {"kind": "binomial"},
            "detector": {"model": "oscillator", "units": "natural", "detectors": [
                {"mass": 1.0, "omega": 1.0, "beta": 0.1, "coupling_lambda": 0.0,
                 "relaxation_rate": 10.0, "measurement_time": 1.0},
                {"mass": 1.0, "omega": 1.0, "beta": 0.1, "coupling_lambda": 0.0,
                 "relaxation_rate": 10.0, "measurement_time": 1.0}
            ]},
            "n_detectors": 2,
            "n_trials": 10,
            "seed": 1
        }));
        let r = discriminability_report(&cfg).unwrap();
        assert_eq!(r.separation_measure, "X/dx");
        assert!(r.detectors.iter().all(|d| d.separation == 0.0 && !d.reliable));
        assert!(r.required_trials.iter().all(|row| row.m_required.is_none()));
        assert!(matches!(error_model(&cfg), Err(PipelineError::Model(_))));
    }

    #[test]
    fn ideal_model_has_no_discriminability() {
        assert!(matches!(
            discriminability_report(&ideal("binomial", 0.5)),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn required_trial_table_matches_closed_form() {
        let cfg = resolve(json!({
            "state": {"p0": 0.5},
            "scenario": {"kind": "binomial"},
            "detector": {"model": "qpc", "detectors": [
                {"bias_voltage_uV": 1000.0, "observation_time_ns": 100.0, "t0": 0.2, "t1": 0.8},
                {"bias_voltage_uV": 1000.0, "observation_time_ns": 100.0, "t0": 0.2, "t1": 0.8}
            ]},
            "n_detectors": 2,
            "n_trials": 10,
            "seed": 1
        }));
        let r = discriminability_report(&cfg).unwrap();
        assert!(r.detectors.iter().all(|d| d.reliable));
        // At p0 = 1/2 symmetric misreads leave both read probabilities at 1/2,
        // so a binomial trial agrees with probability 1/2.
        let expected = [5, 7, 10];
        for (row, closed) in r.required_trials.iter().zip(expected) {
            assert_eq!(closed, (row.alpha.ln() / 0.5f64.ln()).ceil() as u64);
            assert_eq!(row.m_required, Some(closed), "alpha {}", row.alpha);
        }
    }
}
