//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "state": {"p0": 0.5},
//!   "scenario": {"kind": "binomial"},
//!   "detector": {"model": "qpc", "detectors": [
//!     {"bias_voltage_uV": 100.0, "observation_time_ns": 50.0, "t0": 0.3, "t1": 0.7},
//!     {"bias_voltage_uV": 100.0, "observation_time_ns": 50.0, "t0": 0.7, "t1": 0.3}
//!   ]},
//!   "n_detectors": 2,
//!   "n_trials": 10000,
//!   "seed": 42
//! }
//! ```
//!
//! `state` may also be the four real components `[re0, im0, re1, im1]`.
//! Physical quantities carry their unit in the field name; oscillator
//! parameters are interpreted in the declared `units` system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{PhysicalConstants, UnitSystem};
use crate::experiment::{DetectorModel, ExperimentConfig};
use crate::inference::{DecisionRule, DEFAULT_LOG_ODDS_THRESHOLD};
use crate::oscillator::{OscillatorParams, DEFAULT_RELIABLE_RATIO};
use crate::qpc::{QpcParams, SamplingMode, ThresholdRule, DEFAULT_RELIABLE_DISCRIMINABILITY};
use crate::scenarios::{CustomPmf, ScenarioKind};
use crate::state::{born_probabilities, make_amplitudes, Amplitudes};

const MICROVOLT: f64 = 1e-6;
const NANOSECOND: f64 = 1e-9;

/// A config problem, tagged with the path of the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Components([f64; 4]),
    Probability { p0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct QpcSpec {
    pub bias_voltage_uV: f64,
    pub observation_time_ns: f64,
    pub t0: f64,
    pub t1: f64,
}

impl QpcSpec {
    pub fn to_params(&self) -> QpcParams {
        QpcParams {
            bias_voltage: self.bias_voltage_uV * MICROVOLT,
            observation_time: self.observation_time_ns * NANOSECOND,
            t_given_0: self.t0,
            t_given_1: self.t1,
        }
    }
}

fn default_reliable_ratio() -> f64 {
    DEFAULT_RELIABLE_RATIO
}

fn default_reliable_discriminability() -> f64 {
    DEFAULT_RELIABLE_DISCRIMINABILITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum DetectorSpec {
    Ideal,
    Oscillator {
        units: UnitSystem,
        detectors: Vec<OscillatorParams>,
        #[serde(default = "default_reliable_ratio")]
        reliable_ratio: f64,
    },
    Qpc {
        detectors: Vec<QpcSpec>,
        #[serde(default)]
        sampling: SamplingMode,
        #[serde(default)]
        threshold: ThresholdRule,
        #[serde(default = "default_reliable_discriminability")]
        reliable_discriminability: f64,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_LOG_ODDS_THRESHOLD
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSpec {
    #[serde(default = "default_threshold")]
    pub log_odds_threshold: f64,
    #[serde(default)]
    pub prior_log_odds: f64,
    /// Level used for the required-trial estimate reported with a verdict.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for InferenceSpec {
    fn default() -> Self {
        Self {
            log_odds_threshold: default_threshold(),
            prior_log_odds: 0.0,
            alpha: default_alpha(),
        }
    }
}

impl InferenceSpec {
    pub fn rule(&self) -> DecisionRule {
        DecisionRule {
            log_odds_threshold: self.log_odds_threshold,
            prior_log_odds: self.prior_log_odds,
        }
    }
}

/// The on-disk config. Re-serializing it gives the resolved config that is
/// echoed into every output, defaults included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub state: StateSpec,
    pub scenario: ScenarioKind,
    pub detector: DetectorSpec,
    pub n_detectors: usize,
    pub n_trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub inference: InferenceSpec,
}

/// A validated config ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub file: ConfigFile,
    pub experiment: ExperimentConfig,
    pub inference: InferenceSpec,
    /// `X/dx` (oscillator) or `D` (QPC) at or above which a detector counts as reliable.
    pub reliable_threshold: Option<f64>,
    pub warnings: Vec<String>,
}

impl ConfigFile {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            ConfigError::new(field, e.into_inner().to_string())
        })
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            ConfigError::new(field, e.into_inner().to_string())
        })
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let mut warnings = Vec::new();
        let state = match self.state {
            StateSpec::Components([re0, im0, re1, im1]) => {
                let s = make_amplitudes(re0, im0, re1, im1)
                    .map_err(|e| ConfigError::new("state", e.to_string()))?;
                if let Some(w) = s.warning() {
                    warnings.push(format!("state: {w}"));
                }
                s
            }
            StateSpec::Probability { p0 } => {
                Amplitudes::from_p0(p0).map_err(|e| ConfigError::new("state.p0", e.to_string()))?
            }
        };
        let probs = born_probabilities(&state);

        if self.n_detectors < 2 {
            return Err(ConfigError::new(
                "n_detectors",
                format!("must be >= 2 for agreement statistics, got {}", self.n_detectors),
            ));
        }
        if self.n_trials < 1 {
            return Err(ConfigError::new("n_trials", "must be >= 1"));
        }
        if let ScenarioKind::Custom { pmf } = &self.scenario {
            let pmf = CustomPmf::new(pmf.clone(), probs)
                .map_err(|e| ConfigError::new("scenario.pmf", e.to_string()))?;
            if pmf.n_detectors() != self.n_detectors {
                return Err(ConfigError::new(
                    "scenario.pmf",
                    format!(
                        "has {} entries; n_detectors = {} needs {}",
                        pmf.as_slice().len(),
                        self.n_detectors,
                        self.n_detectors + 1
                    ),
                ));
            }
        }

        let count_check = |len: usize| {
            if len != self.n_detectors {
                Err(ConfigError::new(
                    "detector.detectors",
                    format!("{len} entries for n_detectors = {}", self.n_detectors),
                ))
            } else {
                Ok(())
            }
        };
        let (detector, reliable_threshold) = match &self.detector {
            DetectorSpec::Ideal => (DetectorModel::Ideal, None),
            DetectorSpec::Oscillator {
                units,
                detectors,
                reliable_ratio,
            } => {
                count_check(detectors.len())?;
                let constants = PhysicalConstants::for_units(*units);
                for (i, p) in detectors.iter().enumerate() {
                    p.validate()
                        .map_err(|e| ConfigError::new(format!("detector.detectors[{i}]"), e.to_string()))?;
                    for w in p.warnings(&constants) {
                        warnings.push(format!("detector.detectors[{i}]: {w}"));
                    }
                }
                (
                    DetectorModel::Oscillator {
                        detectors: detectors.clone(),
                        constants,
                    },
                    Some(*reliable_ratio),
                )
            }
            DetectorSpec::Qpc {
                detectors,
                sampling,
                threshold,
                reliable_discriminability,
            } => {
                count_check(detectors.len())?;
                let constants = PhysicalConstants::SI;
                let params: Vec<QpcParams> = detectors.iter().map(QpcSpec::to_params).collect();
                for (i, p) in params.iter().enumerate() {
                    p.validate().map_err(|e| {
                        ConfigError::new(format!("detector.detectors[{i}]"), qpc_field_message(&e))
                    })?;
                    for w in p.warnings(&constants) {
                        warnings.push(format!("detector.detectors[{i}]: {w}"));
                    }
                }
                (
                    DetectorModel::Qpc {
                        detectors: params,
                        constants,
                        mode: *sampling,
                        rule: *threshold,
                    },
                    Some(*reliable_discriminability),
                )
            }
        };

        let inf = self.inference;
        if !(inf.log_odds_threshold > 0.0) {
            return Err(ConfigError::new("inference.log_odds_threshold", "must be > 0"));
        }
        if !inf.prior_log_odds.is_finite() {
            return Err(ConfigError::new("inference.prior_log_odds", "must be finite"));
        }
        if !(inf.alpha > 0.0 && inf.alpha <= 1.0) {
            return Err(ConfigError::new("inference.alpha", "must lie in (0, 1]"));
        }

        Ok(ResolvedConfig {
            file: self.clone(),
            experiment: ExperimentConfig {
                state,
                scenario: self.scenario.clone(),
                detector,
                n_detectors: self.n_detectors,
                n_trials: self.n_trials,
                seed: self.seed,
            },
            inference: inf,
            reliable_threshold,
            warnings,
        })
    }
}

/// Maps SI parameter names back to the config's field names.
fn qpc_field_message(e: &crate::qpc::QpcError) -> String {
    e.to_string()
        .replace("bias_voltage", "bias_voltage_uV")
        .replace("observation_time", "observation_time_ns")
        .replace("t_given_0", "t0")
        .replace("t_given_1", "t1")
}

/// Sets the numeric field at a dotted `path` (array indices as numbers, `*`
/// for every element). The field must already exist and hold a number.
pub fn set_numeric_field(
    root: &mut serde_json::Value,
    path: &str,
    value: f64,
) -> Result<(), ConfigError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::new(path, "malformed field path"));
    }
    let mut touched = 0usize;
    set_recursive(root, &segments, path, value, &mut touched)?;
    if touched == 0 {
        return Err(ConfigError::new(path, "unknown field"));
    }
    Ok(())
}

fn set_recursive(
    node: &mut serde_json::Value,
    segments: &[&str],
    path: &str,
    value: f64,
    touched: &mut usize,
) -> Result<(), ConfigError> {
    use serde_json::Value;
    let Some((head, rest)) = segments.split_first() else {
        let replacement = match node {
            Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(ConfigError::new(path, format!("integer field cannot take {value}")));
                }
                Value::from(value as u64)
            }
            Value::Number(_) => serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| ConfigError::new(path, "value must be finite"))?,
            _ => return Err(ConfigError::new(path, "not a numeric field")),
        };
        *node = replacement;
        *touched += 1;
        return Ok(());
    };
    match node {
        Value::Object(map) => match map.get_mut(*head) {
            Some(child) => set_recursive(child, rest, path, value, touched),
            None => Err(ConfigError::new(path, "unknown field")),
        },
        Value::Array(items) if *head == "*" => {
            for item in items {
                set_recursive(item, rest, path, value, touched)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            let idx: usize = head
                .parse()
                .map_err(|_| ConfigError::new(path, "unknown field"))?;
            let child = items
                .get_mut(idx)
                .ok_or_else(|| ConfigError::new(path, "index out of range"))?;
            set_recursive(child, rest, path, value, touched)
        }
        _ => Err(ConfigError::new(path, "unknown field")),
    }
}
