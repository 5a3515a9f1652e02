//! Thermal harmonic-oscillator pointer.
//!
//! Each detector is an oscillator of mass `m` and angular frequency `omega`
//! coupled to the measured observable through `-sigma * lambda * x`. After
//! relaxation (`gamma * tau >> 1`) a detector registering `sigma` sits in the
//! thermal state of its displaced potential, centred at `sigma * X` with
//! `X = lambda / (m omega^2)`. Above `hbar omega` that state is a classical
//! Gaussian with variance `1 / (beta m omega^2)`, which is what we sample.
//!
//! Two joint laws for a pair of detectors are provided:
//!
//! * [`joint_density_qm`]: `p0 g_A(.|0) g_B(.|0) + p1 g_A(.|1) g_B(.|1)`,
//!   the reduced detector state obtained from linear evolution.
//! * [`joint_density_counterfactual`]: the independent-detector mixture with
//!   weights `p0^2`, `p1^2` and `p0 p1` on each cross term. Its same-outcome
//!   weights are quartic in the amplitudes, which linear evolution cannot
//!   produce.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::math::{gaussian_pdf, normal_cdf, normal_upper_tail};
use crate::state::OutcomeProbabilities;

/// `X / dx` at or above which the readout is considered reliable.
pub const DEFAULT_RELIABLE_RATIO: f64 = 5.0;
/// Minimum `gamma * tau` for the relaxed mixture to be a good description.
pub const MIN_RELAXATION_PRODUCT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscillatorError {
    #[error("{field} must be {requirement}, got {value}")]
    InvalidParameter {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("pointer readout is meaningless: X/dx = {ratio} < 1")]
    NotDistinguishable { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscillatorWarning {
    /// `beta hbar omega >= 1`: thermal spread no longer dominates the zero-point spread.
    QuantumRegime { beta_hbar_omega: f64 },
    /// `gamma tau` below [`MIN_RELAXATION_PRODUCT`].
    ShortRelaxation { gamma_tau: f64 },
}

impl std::fmt::Display for OscillatorWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OscillatorWarning::QuantumRegime { beta_hbar_omega } => write!(
                f,
                "beta*hbar*omega = {beta_hbar_omega} >= 1; classical Gaussian pointer statistics are inaccurate"
            ),
            OscillatorWarning::ShortRelaxation { gamma_tau } => write!(
                f,
                "gamma*tau = {gamma_tau} < {MIN_RELAXATION_PRODUCT}; detectors may not have relaxed"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub mass: f64,
    pub omega: f64,
    /// Inverse temperature `1 / (k_B T)`.
    pub beta: f64,
    pub coupling_lambda: f64,
    pub relaxation_rate: f64,
    pub measurement_time: f64,
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<(), OscillatorError> {
        let positive = [
            ("mass", self.mass),
            ("omega", self.omega),
            ("beta", self.beta),
            ("relaxation_rate", self.relaxation_rate),
            ("measurement_time", self.measurement_time),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(OscillatorError::InvalidParameter {
                    field,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        if !(self.coupling_lambda.is_finite() && self.coupling_lambda >= 0.0) {
            return Err(OscillatorError::InvalidParameter {
                field: "coupling_lambda",
                requirement: "finite and >= 0",
                value: self.coupling_lambda,
            });
        }
        Ok(())
    }

    pub fn warnings(&self, constants: &PhysicalConstants) -> Vec<OscillatorWarning> {
        let mut out = Vec::new();
        let bho = self.beta * constants.hbar * self.omega;
        if bho >= 1.0 {
            out.push(OscillatorWarning::QuantumRegime {
                beta_hbar_omega: bho,
            });
        }
        let gamma_tau = self.relaxation_rate * self.measurement_time;
        if gamma_tau < MIN_RELAXATION_PRODUCT {
            out.push(OscillatorWarning::ShortRelaxation { gamma_tau });
        }
        out
    }

    pub fn thermal_variance(&self) -> f64 {
        1.0 / (self.beta * self.mass * self.omega * self.omega)
    }

    /// Zero-point scale `hbar / (m omega)`, used only for the regime check.
    pub fn quantum_variance(&self, constants: &PhysicalConstants) -> f64 {
        constants.hbar / (self.mass * self.omega)
    }
}

/// Equilibrium position `X = lambda / (m omega^2)` of a detector registering 1.
pub fn displacement(params: &OscillatorParams) -> f64 {
    params.coupling_lambda / (params.mass * params.omega * params.omega)
}

pub fn thermal_std(params: &OscillatorParams) -> f64 {
    params.thermal_variance().sqrt()
}

/// `X / dx`.
pub fn distinguishability_ratio(params: &OscillatorParams) -> f64 {
    displacement(params) / thermal_std(params)
}

pub fn is_reliable(params: &OscillatorParams, threshold: f64) -> bool {
    distinguishability_ratio(params) >= threshold
}

/// Probability that the midpoint readout reports the wrong outcome. Equal
/// for both outcomes since the two Gaussians share their width.
pub fn misread_probability(params: &OscillatorParams) -> f64 {
    normal_upper_tail(distinguishability_ratio(params) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointerReading {
    pub x: f64,
}

/// Pointer position of a relaxed detector registering `sigma`.
pub fn sample_pointer<R: Rng + ?Sized>(
    params: &OscillatorParams,
    sigma: u8,
    rng: &mut R,
) -> PointerReading {
    let mean = f64::from(sigma) * displacement(params);
    let normal = Normal::new(mean, thermal_std(params)).expect("validated parameters");
    PointerReading {
        x: normal.sample(rng),
    }
}

/// Thresholds the pointer at `X / 2`; exact ties read 0.
pub fn readout(x: PointerReading, params: &OscillatorParams) -> Result<u8, OscillatorError> {
    let ratio = distinguishability_ratio(params);
    if !(ratio >= 1.0) {
        return Err(OscillatorError::NotDistinguishable { ratio });
    }
    Ok(u8::from(x.x > displacement(params) / 2.0))
}

/// Conditional pointer density `g(x | sigma)`.
pub fn conditional_density(params: &OscillatorParams, sigma: u8, x: f64) -> f64 {
    gaussian_pdf(x, f64::from(sigma) * displacement(params), thermal_std(params))
}

pub fn joint_density_qm(
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    probs: OutcomeProbabilities,
    x_a: f64,
    x_b: f64,
) -> f64 {
    let g = |sigma| conditional_density(params_a, sigma, x_a) * conditional_density(params_b, sigma, x_b);
    probs.p0() * g(0) + probs.p1() * g(1)
}

pub fn joint_density_counterfactual(
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    probs: OutcomeProbabilities,
    x_a: f64,
    x_b: f64,
) -> f64 {
    let (a0, a1) = (
        conditional_density(params_a, 0, x_a),
        conditional_density(params_a, 1, x_a),
    );
    let (b0, b1) = (
        conditional_density(params_b, 0, x_b),
        conditional_density(params_b, 1, x_b),
    );
    let (p0, p1) = (probs.p0(), probs.p1());
    p0 * p0 * a0 * b0 + p1 * p1 * a1 * b1 + p0 * p1 * (a0 * b1 + a1 * b0)
}

/// Probability mass in the four readout quadrants, split at `X_A/2` and `X_B/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantMasses {
    /// Both detectors below threshold.
    pub both_zero: f64,
    pub both_one: f64,
    /// A reads 0, B reads 1.
    pub zero_one: f64,
    pub one_zero: f64,
}

impl QuadrantMasses {
    pub fn cross(&self) -> f64 {
        self.zero_one + self.one_zero
    }
}

/// `P(detector reads `read` | sigma)` for the midpoint readout.
fn read_probability(params: &OscillatorParams, sigma: u8, read: u8) -> f64 {
    let ratio = distinguishability_ratio(params);
    // Standardized distance from the conditional mean up to the threshold.
    let z = (0.5 - f64::from(sigma)) * ratio;
    let below = normal_cdf(z);
    if read == 0 {
        below
    } else {
        normal_cdf(-z)
    }
}

fn quadrant_masses_with(
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    weights: [[f64; 2]; 2],
) -> QuadrantMasses {
    let mass = |ra: u8, rb: u8| -> f64 {
        let mut total = 0.0;
        for sa in 0..2u8 {
            for sb in 0..2u8 {
                let w = weights[sa as usize][sb as usize];
                if w != 0.0 {
                    total += w * read_probability(params_a, sa, ra) * read_probability(params_b, sb, rb);
                }
            }
        }
        total
    };
    QuadrantMasses {
        both_zero: mass(0, 0),
        both_one: mass(1, 1),
        zero_one: mass(0, 1),
        one_zero: mass(1, 0),
    }
}

/// Closed-form quadrant masses of [`joint_density_qm`].
pub fn quadrant_masses_qm(
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    probs: OutcomeProbabilities,
) -> QuadrantMasses {
    quadrant_masses_with(params_a, params_b, [[probs.p0(), 0.0], [0.0, probs.p1()]])
}

/// Closed-form quadrant masses of [`joint_density_counterfactual`].
pub fn quadrant_masses_counterfactual(
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    probs: OutcomeProbabilities,
) -> QuadrantMasses {
    let (p0, p1) = (probs.p0(), probs.p1());
    quadrant_masses_with(params_a, params_b, [[p0 * p0, p0 * p1], [p1 * p0, p1 * p1]])
}

/// Writes both joint densities on a regular `points x points` grid as CSV
/// with columns `x_A,x_B,density,density_counterfactual`.
pub fn write_density_grid<W: Write>(
    out: W,
    params_a: &OscillatorParams,
    params_b: &OscillatorParams,
    probs: OutcomeProbabilities,
    points: usize,
) -> Result<(), csv::Error> {
    let span = |p: &OscillatorParams| {
        let pad = 5.0 * thermal_std(p);
        (-pad, displacement(p) + pad)
    };
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points <= 1 {
            return vec![lo];
        }
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let xs_a = axis(span(params_a));
    let xs_b = axis(span(params_b));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_A", "x_B", "density", "density_counterfactual"])?;
    for &xa in &xs_a {
        for &xb in &xs_b {
            w.write_record([
                xa.to_string(),
                xb.to_string(),
                joint_density_qm(params_a, params_b, probs, xa, xb).to_string(),
                joint_density_counterfactual(params_a, params_b, probs, xa, xb).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
