//! Small numeric helpers shared by the outcome laws and detector models.

use statrs::function::factorial::ln_binomial;
use std::f64::consts::{PI, SQRT_2};

/// Above this many trials the binomial coefficient is evaluated in log space.
pub const LOG_SPACE_THRESHOLD: u64 = 60;

/// Exact `C(n, k)` for `n <= 60`; every intermediate fits in `u128`.
pub(crate) fn binomial_coefficient_exact(n: u64, k: u64) -> u128 {
    debug_assert!(n <= LOG_SPACE_THRESHOLD && k <= n);
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// `C(n, k) p^k (1-p)^(n-k)` with `q = 1 - p` supplied by the caller.
pub(crate) fn binomial_probability(n: u64, k: u64, p: f64, q: f64) -> f64 {
    debug_assert!(k <= n);
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= LOG_SPACE_THRESHOLD {
        let coeff = binomial_coefficient_exact(n, k) as f64;
        coeff * p.powi(k as i32) * q.powi((n - k) as i32)
    } else {
        let log = ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * q.ln();
        log.exp()
    }
}

pub(crate) fn gaussian_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
}

/// Upper tail `P(Z > z)` of a standard normal.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// `P(Z <= z)` of a standard normal.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_coefficients() {
        assert_eq!(binomial_coefficient_exact(4, 2), 6);
        assert_eq!(binomial_coefficient_exact(60, 30), 118_264_581_564_861_424);
        assert_eq!(binomial_coefficient_exact(10, 0), 1);
        assert_eq!(binomial_coefficient_exact(10, 10), 1);
    }

    #[test]
    fn log_and_exact_paths_agree_near_switch() {
        // Values at n = 61 via log space against the recurrence from n = 60.
        let (p, q) = (0.3, 0.7);
        for k in 0..=61u64 {
            let from_60 = if k == 0 {
                binomial_probability(60, 0, p, q) * q
            } else if k == 61 {
                binomial_probability(60, 60, p, q) * p
            } else {
                binomial_probability(60, k, p, q) * q + binomial_probability(60, k - 1, p, q) * p
            };
            let direct = binomial_probability(61, k, p, q);
            assert!((from_60 - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn tails() {
        assert!((normal_upper_tail(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) + normal_upper_tail(1.0) - 1.0).abs() < 1e-15);
        // P(Z > 2.5) = 0.00620966532577...
        assert!((normal_upper_tail(2.5) - 0.006_209_665_325_776_132).abs() < 1e-15);
    }
}
