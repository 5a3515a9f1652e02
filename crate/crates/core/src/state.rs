//! Prepared two-level state and its Born weights.
//!
//! Only the diagonal weights `|c0|^2`, `|c1|^2` feed the outcome laws used
//! downstream. The coherences `c0 c1*` of the system density matrix never
//! enter a pointer distribution once the pointer basis is fixed, so no
//! density-matrix type is kept.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deviation of the input norm from 1 above which a warning is reported.
pub const NORMALIZATION_WARN_TOL: f64 = 1e-6;
/// Deviation of the input norm from 1 above which the input counts as renormalized.
pub const RENORMALIZED_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state vector is zero and cannot be normalized")]
    ZeroState,
    #[error("amplitude component is not finite")]
    NonFinite,
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("probability vector needs at least two outcomes, got {0}")]
    TooFewOutcomes(usize),
    #[error("at most 256 outcomes are supported, got {0}")]
    TooManyOutcomes(usize),
    #[error("probability vector has zero total weight")]
    ZeroWeight,
}

/// Reported when the amplitudes handed to [`make_amplitudes`] were noticeably off unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationWarning {
    pub input_norm: f64,
}

impl std::fmt::Display for NormalizationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "state vector had norm {} and was renormalized to 1",
            self.input_norm
        )
    }
}

/// Normalized amplitudes `c0 |0> + c1 |1>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitudes {
    c0: Complex64,
    c1: Complex64,
    input_norm: f64,
}

impl Amplitudes {
    pub fn c0(&self) -> Complex64 {
        self.c0
    }

    pub fn c1(&self) -> Complex64 {
        self.c1
    }

    /// Norm of the vector as it was supplied, before renormalization.
    pub fn input_norm(&self) -> f64 {
        self.input_norm
    }

    /// True if construction had to rescale the input by more than 1e-9.
    pub fn was_renormalized(&self) -> bool {
        (self.input_norm - 1.0).abs() > RENORMALIZED_TOL
    }

    pub fn warning(&self) -> Option<NormalizationWarning> {
        ((self.input_norm - 1.0).abs() > NORMALIZATION_WARN_TOL).then_some(NormalizationWarning {
            input_norm: self.input_norm,
        })
    }

    /// Real, non-negative amplitudes `(sqrt(p0), sqrt(1 - p0))`.
    pub fn from_p0(p0: f64) -> Result<Self, StateError> {
        if !p0.is_finite() || !(0.0..=1.0).contains(&p0) {
            return Err(StateError::ProbabilityOutOfRange(p0));
        }
        Ok(Self {
            c0: Complex64::new(p0.sqrt(), 0.0),
            c1: Complex64::new((1.0 - p0).sqrt(), 0.0),
            input_norm: 1.0,
        })
    }

    /// Multiplies both amplitudes by `e^{i phi}`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let phase = Complex64::from_polar(1.0, phi);
        Self {
            c0: self.c0 * phase,
            c1: self.c1 * phase,
            input_norm: self.input_norm,
        }
    }
}

/// Builds normalized amplitudes from four real components.
pub fn make_amplitudes(re0: f64, im0: f64, re1: f64, im1: f64) -> Result<Amplitudes, StateError> {
    if ![re0, im0, re1, im1].iter().all(|v| v.is_finite()) {
        return Err(StateError::NonFinite);
    }
    let c0 = Complex64::new(re0, im0);
    let c1 = Complex64::new(re1, im1);
    let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
    if norm == 0.0 {
        return Err(StateError::ZeroState);
    }
    Ok(Amplitudes {
        c0: c0 / norm,
        c1: c1 / norm,
        input_norm: norm,
    })
}

/// Two-outcome probabilities; `p1` is always `1 - p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct OutcomeProbabilities {
    p0: f64,
}

impl OutcomeProbabilities {
    pub fn new(p0: f64) -> Result<Self, StateError> {
        if !p0.is_finite() || !(0.0..=1.0).contains(&p0) {
            return Err(StateError::ProbabilityOutOfRange(p0));
        }
        Ok(Self { p0 })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        1.0 - self.p0
    }

    /// Probability of outcome `bit` (0 or 1).
    pub fn of(&self, bit: u8) -> f64 {
        if bit == 0 {
            self.p0()
        } else {
            self.p1()
        }
    }
}

impl TryFrom<f64> for OutcomeProbabilities {
    type Error = StateError;
    fn try_from(p0: f64) -> Result<Self, Self::Error> {
        Self::new(p0)
    }
}

impl From<OutcomeProbabilities> for f64 {
    fn from(p: OutcomeProbabilities) -> f64 {
        p.p0
    }
}

/// Born weights of a two-level state: `(|c0|^2, 1 - |c0|^2)`.
pub fn born_probabilities(state: &Amplitudes) -> OutcomeProbabilities {
    // Dividing by the total keeps the result in [0, 1] even when the stored
    // amplitudes carry the last-ulp residue of normalization.
    let w0 = state.c0.norm_sqr();
    let w1 = state.c1.norm_sqr();
    let p0 = (w0 / (w0 + w1)).clamp(0.0, 1.0);
    OutcomeProbabilities { p0 }
}

/// Probabilities over `d >= 2` outcomes of a many-valued observable.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutcomeProbabilities {
    probs: Vec<f64>,
}

impl MultiOutcomeProbabilities {
    /// Renormalizes the given non-negative weights to sum to one.
    pub fn new(weights: Vec<f64>) -> Result<Self, StateError> {
        if weights.len() < 2 {
            return Err(StateError::TooFewOutcomes(weights.len()));
        }
        if weights.len() > 256 {
            return Err(StateError::TooManyOutcomes(weights.len()));
        }
        if let Some(&bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(StateError::ProbabilityOutOfRange(bad));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(StateError::ZeroWeight);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_outcomes(&self) -> usize {
        self.probs.len()
    }
}

impl From<OutcomeProbabilities> for MultiOutcomeProbabilities {
    fn from(p: OutcomeProbabilities) -> Self {
        Self {
            probs: vec![p.p0(), p.p1()],
        }
    }
}
