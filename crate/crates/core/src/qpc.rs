//! Quantum-point-contact charge detector in the shot-noise limit.
//!
//! With the measured charge in state `sigma`, a QPC biased at `V` transmits
//! each of its `N = 2 e V tau / h` attempts with probability `T_sigma`
//! (the factor 2 is spin degeneracy), so the transmitted count is
//! `Binomial(N, T_sigma)`. For long windows the time-averaged current is
//! Gaussian with mean `I_sigma = 2 G_Q V T_sigma` and variance `S_sigma / tau`,
//! where `S_sigma = 2 G_Q e V R_sigma T_sigma` and `G_Q = e^2 / h`.
//!
//! Computations are in SI (or whatever system the supplied
//! [`PhysicalConstants`] describe); the config layer converts from uV and ns.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::math::{binomial_probability, gaussian_pdf, normal_cdf, normal_upper_tail};
use crate::state::OutcomeProbabilities;

/// Attempt count below which the Gaussian current density is flagged.
pub const GAUSSIAN_MIN_ATTEMPTS: u64 = 100;
/// Discriminability at or above which the readout is considered reliable (about 5 sigma).
pub const DEFAULT_RELIABLE_DISCRIMINABILITY: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpcError {
    #[error("{field} must be {requirement}, got {value}")]
    InvalidParameter {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("2eV*tau/h rounds to {0} attempts; at least one is required")]
    TooFewAttempts(u64),
    #[error("count {n} exceeds the {attempts} attempts")]
    OutOfRange { n: u64, attempts: u64 },
    #[error("T0 == T1 = {0}: the current carries no information about the charge")]
    NoContrast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpcWarning {
    GaussianRegimeViolation { attempts: u64 },
}

impl std::fmt::Display for QpcWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpcWarning::GaussianRegimeViolation { attempts } => write!(
                f,
                "only {attempts} attempts (< {GAUSSIAN_MIN_ATTEMPTS}); Gaussian current density is a poor approximation"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpcParams {
    /// Volts.
    pub bias_voltage: f64,
    /// Seconds.
    pub observation_time: f64,
    pub t_given_0: f64,
    pub t_given_1: f64,
}

impl QpcParams {
    pub fn validate(&self) -> Result<(), QpcError> {
        for (field, value) in [
            ("bias_voltage", self.bias_voltage),
            ("observation_time", self.observation_time),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(QpcError::InvalidParameter {
                    field,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        for (field, value) in [("t_given_0", self.t_given_0), ("t_given_1", self.t_given_1)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(QpcError::InvalidParameter {
                    field,
                    requirement: "strictly between 0 and 1",
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn transmission(&self, sigma: u8) -> f64 {
        if sigma == 0 {
            self.t_given_0
        } else {
            self.t_given_1
        }
    }

    pub fn reflection(&self, sigma: u8) -> f64 {
        1.0 - self.transmission(sigma)
    }

    pub fn warnings(&self, constants: &PhysicalConstants) -> Vec<QpcWarning> {
        match attempts(self, constants) {
            Ok(n) if n >= GAUSSIAN_MIN_ATTEMPTS => Vec::new(),
            Ok(n) | Err(QpcError::TooFewAttempts(n)) => {
                vec![QpcWarning::GaussianRegimeViolation { attempts: n }]
            }
            Err(_) => Vec::new(),
        }
    }
}

/// Unrounded `2 e V tau / h`.
pub fn attempt_rate(params: &QpcParams, constants: &PhysicalConstants) -> f64 {
    2.0 * constants.electron_charge * params.bias_voltage * params.observation_time / constants.planck
}

/// Number of transmission attempts in the window, rounded to nearest.
pub fn attempts(params: &QpcParams, constants: &PhysicalConstants) -> Result<u64, QpcError> {
    let n = attempt_rate(params, constants).round() as u64;
    if n < 1 {
        return Err(QpcError::TooFewAttempts(n));
    }
    Ok(n)
}

/// `P(n electrons transmitted | sigma)`.
pub fn count_pmf(
    params: &QpcParams,
    constants: &PhysicalConstants,
    sigma: u8,
    n: u64,
) -> Result<f64, QpcError> {
    let attempts = attempts(params, constants)?;
    if n > attempts {
        return Err(QpcError::OutOfRange { n, attempts });
    }
    Ok(binomial_probability(
        attempts,
        n,
        params.transmission(sigma),
        params.reflection(sigma),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentStats {
    pub mean_current: f64,
    /// Zero-frequency shot noise `S`; the current variance over the window is `S / tau`.
    pub noise: f64,
    pub std_current: f64,
}

pub fn current_stats(params: &QpcParams, sigma: u8, constants: &PhysicalConstants) -> CurrentStats {
    let g = 2.0 * constants.conductance_quantum();
    let t = params.transmission(sigma);
    let r = params.reflection(sigma);
    let mean_current = g * params.bias_voltage * t;
    let noise = g * constants.electron_charge * params.bias_voltage * r * t;
    CurrentStats {
        mean_current,
        noise,
        std_current: (noise / params.observation_time).sqrt(),
    }
}

/// Gaussian density of the window-averaged current given `sigma`.
pub fn current_density(
    params: &QpcParams,
    sigma: u8,
    current: f64,
    constants: &PhysicalConstants,
) -> f64 {
    let stats = current_stats(params, sigma, constants);
    gaussian_pdf(current, stats.mean_current, stats.std_current)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Binomial transmitted count, converted to a current.
    #[default]
    ExactBinomial,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentSample {
    pub current: f64,
    pub raw_count: Option<u64>,
}

pub fn sample_current<R: Rng + ?Sized>(
    params: &QpcParams,
    sigma: u8,
    rng: &mut R,
    mode: SamplingMode,
    constants: &PhysicalConstants,
) -> Result<CurrentSample, QpcError> {
    match mode {
        SamplingMode::ExactBinomial => {
            let n = attempts(params, constants)?;
            let dist = Binomial::new(n, params.transmission(sigma)).expect("validated transmission");
            let count = dist.sample(rng);
            Ok(CurrentSample {
                current: constants.electron_charge * count as f64 / params.observation_time,
                raw_count: Some(count),
            })
        }
        SamplingMode::Gaussian => {
            let stats = current_stats(params, sigma, constants);
            let dist = Normal::new(stats.mean_current, stats.std_current).expect("finite stats");
            Ok(CurrentSample {
                current: dist.sample(rng),
                raw_count: None,
            })
        }
    }
}

/// `p0 Pi_A(i_A|0) Pi_B(i_B|0) + p1 Pi_A(i_A|1) Pi_B(i_B|1)`.
pub fn joint_current_density(
    params_a: &QpcParams,
    params_b: &QpcParams,
    probs: OutcomeProbabilities,
    i_a: f64,
    i_b: f64,
    constants: &PhysicalConstants,
) -> f64 {
    let term = |sigma| {
        current_density(params_a, sigma, i_a, constants) * current_density(params_b, sigma, i_b, constants)
    };
    probs.p0() * term(0) + probs.p1() * term(1)
}

/// `D = (I_0 - I_1)^2 tau / (S_0 + S_1)`; equals `N (dT)^2 / (R_0 T_0 + R_1 T_1)`.
pub fn discriminability(params: &QpcParams, constants: &PhysicalConstants) -> f64 {
    let s0 = current_stats(params, 0, constants);
    let s1 = current_stats(params, 1, constants);
    let delta = s0.mean_current - s1.mean_current;
    delta * delta * params.observation_time / (s0.noise + s1.noise)
}

pub fn is_reliable(params: &QpcParams, constants: &PhysicalConstants, threshold: f64) -> bool {
    discriminability(params, constants) >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Threshold halfway between the two mean currents.
    #[default]
    Midpoint,
    /// Pick the outcome with the larger Gaussian density.
    LikelihoodRatio,
}

/// Maps a measured current to an outcome; exact ties read 0.
pub fn current_readout(
    current: f64,
    params: &QpcParams,
    constants: &PhysicalConstants,
    rule: ThresholdRule,
) -> Result<u8, QpcError> {
    if params.t_given_0 == params.t_given_1 {
        return Err(QpcError::NoContrast(params.t_given_0));
    }
    let s0 = current_stats(params, 0, constants);
    let s1 = current_stats(params, 1, constants);
    let one = match rule {
        ThresholdRule::Midpoint => {
            let mid = 0.5 * (s0.mean_current + s1.mean_current);
            if s1.mean_current > s0.mean_current {
                current > mid
            } else {
                current < mid
            }
        }
        ThresholdRule::LikelihoodRatio => log_density_ratio(current, &s0, &s1) > 0.0,
    };
    Ok(u8::from(one))
}

/// `ln Pi(I|1) - ln Pi(I|0)`.
fn log_density_ratio(current: f64, s0: &CurrentStats, s1: &CurrentStats) -> f64 {
    let z0 = (current - s0.mean_current) / s0.std_current;
    let z1 = (current - s1.mean_current) / s1.std_current;
    0.5 * (z0 * z0 - z1 * z1) + (s0.std_current / s1.std_current).ln()
}

/// Gaussian-model probabilities `[P(read 1 | 0), P(read 0 | 1)]` for the given rule.
pub fn misread_probabilities(
    params: &QpcParams,
    constants: &PhysicalConstants,
    rule: ThresholdRule,
) -> Result<[f64; 2], QpcError> {
    if params.t_given_0 == params.t_given_1 {
        return Err(QpcError::NoContrast(params.t_given_0));
    }
    let s = [current_stats(params, 0, constants), current_stats(params, 1, constants)];
    let up = s[1].mean_current > s[0].mean_current;
    match rule {
        ThresholdRule::Midpoint => {
            let half = 0.5 * (s[1].mean_current - s[0].mean_current).abs();
            Ok([
                normal_upper_tail(half / s[0].std_current),
                normal_upper_tail(half / s[1].std_current),
            ])
        }
        ThresholdRule::LikelihoodRatio => {
            // Region reading 1 is where a*I^2 + b*I + c > 0.
            let (m0, v0) = (s[0].mean_current, s[0].std_current.powi(2));
            let (m1, v1) = (s[1].mean_current, s[1].std_current.powi(2));
            let a = 0.5 / v0 - 0.5 / v1;
            let b = m1 / v1 - m0 / v0;
            let c = 0.5 * m0 * m0 / v0 - 0.5 * m1 * m1 / v1 + 0.5 * (v0 / v1).ln();
            let p_read_one = |sigma: usize| -> f64 {
                let (m, sd) = (s[sigma].mean_current, s[sigma].std_current);
                let cdf = |x: f64| normal_cdf((x - m) / sd);
                if a == 0.0 {
                    let root = -c / b;
                    return if up { 1.0 - cdf(root) } else { cdf(root) };
                }
                // Numerically stable roots; one of them runs off to infinity as a -> 0.
                let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
                let q = -0.5 * (b + b.signum() * disc);
                let (x1, x2) = (q / a, c / q);
                let (r1, r2) = (x1.min(x2), x1.max(x2));
                let inside = cdf(r2) - cdf(r1);
                if a > 0.0 {
                    1.0 - inside
                } else {
                    inside
                }
            };
            Ok([p_read_one(0), 1.0 - p_read_one(1)])
        }
    }
}

/// Closed-form misread bound `P(Z > sqrt(D) / 2)`.
///
/// The midpoint sits `|I_0 - I_1| / 2` from each mean and each conditional
/// variance is at most `(S_0 + S_1) / tau`, so both midpoint misread
/// probabilities are below this value. At `D = 25` it is about 0.0062.
pub fn misread_bound(params: &QpcParams, constants: &PhysicalConstants) -> f64 {
    normal_upper_tail(discriminability(params, constants).sqrt() / 2.0)
}
