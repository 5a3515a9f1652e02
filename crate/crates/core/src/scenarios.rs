//! Per-trial outcome laws for `N` detectors watching the same system.
//!
//! * [`ScenarioKind::Unanimous`]: one collective outcome per trial, shared by
//!   every detector.
//! * [`ScenarioKind::Binomial`]: each detector reads an independent Born
//!   draw, so the number of zeros `N0` is `Binomial(N, p0)`.
//! * [`ScenarioKind::Custom`]: any law on `N0` whose mean is `p0 N`. The
//!   detectors that read zero are chosen uniformly among the `C(N, N0)`
//!   subsets. Generation only; the inference engine does not score it.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::binomial_probability;
use crate::state::{MultiOutcomeProbabilities, OutcomeProbabilities};

/// Tolerance on the total mass of a custom law.
pub const CUSTOM_SUM_TOL: f64 = 1e-12;
/// Tolerance on `sum N0 P(N0) = p0 N` for a custom law.
pub const CUSTOM_MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("n_zero = {n_zero} exceeds n_detectors = {n_detectors}")]
    OutOfRange { n_detectors: u64, n_zero: u64 },
    #[error("invalid custom pmf: {0}")]
    InvalidPmf(String),
    #[error("at least one detector is required")]
    NoDetectors,
}

/// Law on `N0` for the custom scenario, validated against `p0` and `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CustomPmf {
    pmf: Vec<f64>,
}

impl CustomPmf {
    /// `pmf[k]` is `P(N0 = k)` for `k = 0..=N`.
    pub fn new(pmf: Vec<f64>, probs: OutcomeProbabilities) -> Result<Self, ScenarioError> {
        let pmf = Self { pmf };
        pmf.validate(probs)?;
        Ok(pmf)
    }

    /// Wraps a law without checking it; call [`CustomPmf::validate`] before sampling.
    pub fn unchecked(pmf: Vec<f64>) -> Self {
        Self { pmf }
    }

    pub fn validate(&self, probs: OutcomeProbabilities) -> Result<(), ScenarioError> {
        if self.pmf.len() < 2 {
            return Err(ScenarioError::InvalidPmf(format!(
                "need entries for N0 = 0..=N with N >= 1, got {} entries",
                self.pmf.len()
            )));
        }
        if let Some((k, v)) = self
            .pmf
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ScenarioError::InvalidPmf(format!("entry {k} is {v}")));
        }
        let total: f64 = self.pmf.iter().sum();
        if (total - 1.0).abs() > CUSTOM_SUM_TOL {
            return Err(ScenarioError::InvalidPmf(format!("entries sum to {total}")));
        }
        let n = self.n_detectors() as f64;
        let mean: f64 = self.pmf.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
        if (mean - probs.p0() * n).abs() > CUSTOM_MEAN_TOL {
            return Err(ScenarioError::InvalidPmf(format!(
                "mean N0 is {mean}, expected p0 * N = {}",
                probs.p0() * n
            )));
        }
        Ok(())
    }

    pub fn n_detectors(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pmf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioKind {
    Unanimous,
    Binomial,
    Custom { pmf: Vec<f64> },
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Unanimous => "unanimous",
            ScenarioKind::Binomial => "binomial",
            ScenarioKind::Custom { .. } => "custom",
        }
    }
}

/// Readings of all detectors in one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub outcomes: Vec<u8>,
    /// The collective outcome; present only for unanimous trials.
    pub latent_sigma: Option<u8>,
}

impl TrialOutcome {
    pub fn n_zero(&self) -> usize {
        self.outcomes.iter().filter(|&&b| b == 0).count()
    }
}

/// `P(N0 = n_zero)` for `n_detectors` independent Born draws.
pub fn binomial_pmf(
    n_detectors: u64,
    n_zero: u64,
    probs: OutcomeProbabilities,
) -> Result<f64, ScenarioError> {
    if n_zero > n_detectors {
        return Err(ScenarioError::OutOfRange {
            n_detectors,
            n_zero,
        });
    }
    Ok(binomial_probability(
        n_detectors,
        n_zero,
        probs.p0(),
        probs.p1(),
    ))
}

pub fn sample_unanimous<R: Rng + ?Sized>(
    probs: OutcomeProbabilities,
    n_detectors: usize,
    rng: &mut R,
) -> TrialOutcome {
    assert!(n_detectors >= 1, "at least one detector is required");
    let sigma = if rng.random_bool(probs.p0()) { 0 } else { 1 };
    TrialOutcome {
        outcomes: vec![sigma; n_detectors],
        latent_sigma: Some(sigma),
    }
}

pub fn sample_binomial_trial<R: Rng + ?Sized>(
    probs: OutcomeProbabilities,
    n_detectors: usize,
    rng: &mut R,
) -> TrialOutcome {
    assert!(n_detectors >= 1, "at least one detector is required");
    let outcomes = (0..n_detectors)
        .map(|_| if rng.random_bool(probs.p0()) { 0 } else { 1 })
        .collect();
    TrialOutcome {
        outcomes,
        latent_sigma: None,
    }
}

/// Draws `N0` from the custom law, then a uniformly random subset of `N0` zero-readers.
pub fn sample_custom_trial<R: Rng + ?Sized>(
    pmf: &CustomPmf,
    n_detectors: usize,
    rng: &mut R,
) -> Result<TrialOutcome, ScenarioError> {
    if n_detectors == 0 {
        return Err(ScenarioError::NoDetectors);
    }
    if pmf.n_detectors() != n_detectors {
        return Err(ScenarioError::InvalidPmf(format!(
            "law covers N = {} detectors, trial has {n_detectors}",
            pmf.n_detectors()
        )));
    }
    let index = WeightedIndex::new(pmf.as_slice())
        .map_err(|e| ScenarioError::InvalidPmf(e.to_string()))?;
    let n_zero = index.sample(rng);
    let mut outcomes = vec![1u8; n_detectors];
    for i in rand::seq::index::sample(rng, n_detectors, n_zero) {
        outcomes[i] = 0;
    }
    Ok(TrialOutcome {
        outcomes,
        latent_sigma: None,
    })
}

/// Independent categorical draw per detector over `d` outcomes.
pub fn sample_multinomial_trial<R: Rng + ?Sized>(
    probs: &MultiOutcomeProbabilities,
    n_detectors: usize,
    rng: &mut R,
) -> TrialOutcome {
    assert!(n_detectors >= 1, "at least one detector is required");
    let outcomes = if probs.n_outcomes() == 2 {
        // Same draw sequence as the two-outcome sampler.
        let p0 = probs.probs()[0];
        (0..n_detectors)
            .map(|_| if rng.random_bool(p0) { 0 } else { 1 })
            .collect()
    } else {
        let index = WeightedIndex::new(probs.probs()).expect("validated probabilities");
        (0..n_detectors).map(|_| index.sample(rng) as u8).collect()
    };
    TrialOutcome {
        outcomes,
        latent_sigma: None,
    }
}
