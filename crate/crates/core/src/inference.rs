//! Likelihood comparison of the unanimous and binomial outcome laws.
//!
//! Each detector is allowed a symmetric misread probability `eps_a`. Under
//! the unanimous law a trial pattern has probability
//! `sum_sigma p_sigma prod_a (eps_a if o_a != sigma else 1 - eps_a)`; under
//! the binomial law detectors are independent and each reads 0 with
//! `p0 (1 - eps_a) + p1 eps_a`.
//!
//! Log-likelihoods may be `-inf` when the data contain a pattern the law
//! forbids (a mixed trial under the unanimous law with `eps = 0`). That is a
//! result, not an error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::ExperimentSummary;
use crate::state::OutcomeProbabilities;

/// Decisive Bayes factor, `ln 100`.
pub const DEFAULT_LOG_ODDS_THRESHOLD: f64 = 4.605_170_185_988_092;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("misread probability {0} must lie in [0, 0.5)")]
    InvalidMisread(f64),
    #[error("error model covers {model} detectors, data have {data}")]
    DetectorCountMismatch { model: usize, data: usize },
    #[error("no trials")]
    EmptyInput,
    #[error("trial {index} has {found} outcomes, expected {expected}")]
    RaggedRecords {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("trial {index} contains outcome {value}; only 0 and 1 are supported")]
    NonBinaryOutcome { index: usize, value: u8 },
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("p0 * p1 = 0: both laws predict identical data")]
    NoDiscrimination,
    #[error("log-odds threshold must be > 0, got {0}")]
    InvalidThreshold(f64),
    #[error("summary-based likelihoods need exactly two detectors, got {0}")]
    NotTwoDetectors(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorModel {
    eps: Vec<f64>,
}

impl ErrorModel {
    pub fn new(eps: Vec<f64>) -> Result<Self, InferenceError> {
        if let Some(&bad) = eps.iter().find(|e| !(**e >= 0.0 && **e < 0.5)) {
            return Err(InferenceError::InvalidMisread(bad));
        }
        Ok(Self { eps })
    }

    pub fn perfect(n_detectors: usize) -> Self {
        Self {
            eps: vec![0.0; n_detectors],
        }
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn n_detectors(&self) -> usize {
        self.eps.len()
    }

    /// Probability that detector `a` reports `read` when the system holds `sigma`.
    fn channel(&self, a: usize, sigma: u8, read: u8) -> f64 {
        if read == sigma {
            1.0 - self.eps[a]
        } else {
            self.eps[a]
        }
    }

    /// `P(detector a reads `read`)` when its own outcome is a fresh Born draw.
    pub fn effective_probability(&self, a: usize, probs: OutcomeProbabilities, read: u8) -> f64 {
        let e = self.eps[a];
        let p = probs.of(read);
        p * (1.0 - e) + (1.0 - p) * e
    }
}

/// Multiplicities of each distinct outcome pattern in a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternCounts {
    n_detectors: usize,
    n_trials: u64,
    counts: BTreeMap<Vec<u8>, u64>,
}

impl PatternCounts {
    pub fn from_outcomes<'a, I>(trials: I) -> Result<Self, InferenceError>
    where
        I: IntoIterator<Item = &'a [u8]>,
    {
        let mut counts = BTreeMap::new();
        let mut n_detectors = None;
        let mut n_trials = 0u64;
        for (index, outcomes) in trials.into_iter().enumerate() {
            let expected = *n_detectors.get_or_insert(outcomes.len());
            if outcomes.len() != expected {
                return Err(InferenceError::RaggedRecords {
                    index,
                    expected,
                    found: outcomes.len(),
                });
            }
            if let Some(&value) = outcomes.iter().find(|&&b| b > 1) {
                return Err(InferenceError::NonBinaryOutcome { index, value });
            }
            *counts.entry(outcomes.to_vec()).or_insert(0) += 1;
            n_trials += 1;
        }
        let n_detectors = n_detectors.ok_or(InferenceError::EmptyInput)?;
        if n_detectors == 0 {
            return Err(InferenceError::EmptyInput);
        }
        Ok(Self {
            n_detectors,
            n_trials,
            counts,
        })
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn n_trials(&self) -> u64 {
        self.n_trials
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn mixed_trials(&self) -> u64 {
        self.iter()
            .filter(|(p, _)| p.iter().any(|&b| b != p[0]))
            .map(|(_, c)| c)
            .sum()
    }
}

/// `P(pattern)` under the unanimous law.
pub fn pattern_probability_unanimous(pattern: &[u8], probs: OutcomeProbabilities, err: &ErrorModel) -> f64 {
    (0..2u8)
        .map(|sigma| {
            probs.of(sigma)
                * pattern
                    .iter()
                    .enumerate()
                    .map(|(a, &o)| err.channel(a, sigma, o))
                    .product::<f64>()
        })
        .sum()
}

/// `P(pattern)` under the binomial law.
pub fn pattern_probability_binomial(pattern: &[u8], probs: OutcomeProbabilities, err: &ErrorModel) -> f64 {
    pattern
        .iter()
        .enumerate()
        .map(|(a, &o)| err.effective_probability(a, probs, o))
        .product()
}

fn weighted_log_sum<F>(data: &PatternCounts, err: &ErrorModel, prob: F) -> Result<f64, InferenceError>
where
    F: Fn(&[u8]) -> f64,
{
    if err.n_detectors() != data.n_detectors {
        return Err(InferenceError::DetectorCountMismatch {
            model: err.n_detectors(),
            data: data.n_detectors,
        });
    }
    Ok(data
        .iter()
        .map(|(pattern, count)| count as f64 * prob(pattern).ln())
        .sum())
}

pub fn loglik_unanimous(
    data: &PatternCounts,
    probs: OutcomeProbabilities,
    err: &ErrorModel,
) -> Result<f64, InferenceError> {
    weighted_log_sum(data, err, |p| pattern_probability_unanimous(p, probs, err))
}

pub fn loglik_binomial(
    data: &PatternCounts,
    probs: OutcomeProbabilities,
    err: &ErrorModel,
) -> Result<f64, InferenceError> {
    weighted_log_sum(data, err, |p| pattern_probability_binomial(p, probs, err))
}

/// Two-detector likelihood from the summary counts alone.
///
/// The summary does not record which detector read 0 in a mixed trial, so
/// mixed trials enter with the combined probability `P(01) + P(10)`.
fn loglik_summary<F>(
    summary: &ExperimentSummary,
    err: &ErrorModel,
    prob: F,
) -> Result<f64, InferenceError>
where
    F: Fn(&[u8]) -> f64,
{
    let n = summary.histogram_n0.len().saturating_sub(1);
    if n != 2 {
        return Err(InferenceError::NotTwoDetectors(n));
    }
    if err.n_detectors() != 2 {
        return Err(InferenceError::DetectorCountMismatch {
            model: err.n_detectors(),
            data: 2,
        });
    }
    let term = |count: u64, p: f64| if count == 0 { 0.0 } else { count as f64 * p.ln() };
    Ok(term(summary.m0_unanimous_zero, prob(&[0, 0]))
        + term(summary.m1_unanimous_one, prob(&[1, 1]))
        + term(summary.disagreements, prob(&[0, 1]) + prob(&[1, 0])))
}

pub fn loglik_unanimous_summary(
    summary: &ExperimentSummary,
    probs: OutcomeProbabilities,
    err: &ErrorModel,
) -> Result<f64, InferenceError> {
    loglik_summary(summary, err, |p| pattern_probability_unanimous(p, probs, err))
}

pub fn loglik_binomial_summary(
    summary: &ExperimentSummary,
    probs: OutcomeProbabilities,
    err: &ErrorModel,
) -> Result<f64, InferenceError> {
    loglik_summary(summary, err, |p| pattern_probability_binomial(p, probs, err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Unanimous,
    Binomial,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub log_odds_threshold: f64,
    /// `ln P(unanimous) - ln P(binomial)` before seeing data.
    pub prior_log_odds: f64,
}

impl Default for DecisionRule {
    fn default() -> Self {
        Self {
            log_odds_threshold: DEFAULT_LOG_ODDS_THRESHOLD,
            prior_log_odds: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioVerdict {
    pub loglik_unanimous: f64,
    pub loglik_binomial: f64,
    /// `loglik_unanimous - loglik_binomial`.
    pub log_odds: f64,
    pub prior_log_odds: f64,
    pub decision: Decision,
    pub confidence: f64,
    pub trials_used: u64,
}

/// Difference of two log-likelihoods with `-inf - -inf` read as no evidence.
fn log_odds_of(ll_u: f64, ll_b: f64) -> f64 {
    if ll_u == f64::NEG_INFINITY && ll_b == f64::NEG_INFINITY {
        0.0
    } else {
        ll_u - ll_b
    }
}

pub fn decide(
    data: &PatternCounts,
    probs: OutcomeProbabilities,
    err: &ErrorModel,
    rule: &DecisionRule,
) -> Result<ScenarioVerdict, InferenceError> {
    if !(rule.log_odds_threshold > 0.0) {
        return Err(InferenceError::InvalidThreshold(rule.log_odds_threshold));
    }
    let ll_u = loglik_unanimous(data, probs, err)?;
    let ll_b = loglik_binomial(data, probs, err)?;
    let log_odds = log_odds_of(ll_u, ll_b);
    let posterior = log_odds + rule.prior_log_odds;
    let decision = if posterior >= rule.log_odds_threshold {
        Decision::Unanimous
    } else if posterior <= -rule.log_odds_threshold {
        Decision::Binomial
    } else {
        Decision::Inconclusive
    };
    let confidence = 1.0 / (1.0 + (-posterior.abs()).exp());
    Ok(ScenarioVerdict {
        loglik_unanimous: ll_u,
        loglik_binomial: ll_b,
        log_odds,
        prior_log_odds: rule.prior_log_odds,
        decision,
        confidence,
        trials_used: data.n_trials(),
    })
}

/// Probability that one binomial-law trial is not unanimous, misreads included.
pub fn binomial_disagreement_probability(probs: OutcomeProbabilities, err: &ErrorModel) -> f64 {
    let n = err.n_detectors();
    let all = |read| (0..n).map(|a| err.effective_probability(a, probs, read)).product::<f64>();
    (1.0 - all(0) - all(1)).max(0.0)
}

/// Smallest `M` for which the binomial law yields zero disagreements in `M`
/// trials with probability at most `alpha`.
pub fn required_trials(
    probs: OutcomeProbabilities,
    alpha: f64,
    err: &ErrorModel,
) -> Result<u64, InferenceError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    if probs.p0() * probs.p1() == 0.0 {
        return Err(InferenceError::NoDiscrimination);
    }
    let q = binomial_disagreement_probability(probs, err);
    if q >= 1.0 {
        return Ok(1);
    }
    if q <= 0.0 {
        return Err(InferenceError::NoDiscrimination);
    }
    let log_keep = (-q).ln_1p();
    let ln_alpha = alpha.ln();
    let mut m = ((ln_alpha / log_keep).ceil() as u64).max(1);
    // Settle rounding at exact boundaries.
    let ok = |m: u64| m as f64 * log_keep <= ln_alpha;
    while m > 1 && ok(m - 1) {
        m -= 1;
    }
    while !ok(m) {
        m += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::summarize_outcomes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(p0: f64) -> OutcomeProbabilities {
        OutcomeProbabilities::new(p0).unwrap()
    }

    fn counts(trials: &[&[u8]]) -> PatternCounts {
        PatternCounts::from_outcomes(trials.iter().copied()).unwrap()
    }

    fn repeat(pattern: &'static [u8], k: usize) -> Vec<&'static [u8]> {
        vec![pattern; k]
    }

    #[test]
    fn error_model_validation() {
        assert!(ErrorModel::new(vec![0.0, 0.49]).is_ok());
        assert_eq!(ErrorModel::new(vec![0.5]), Err(InferenceError::InvalidMisread(0.5)));
        assert!(ErrorModel::new(vec![-0.1]).is_err());
    }

    #[test]
    fn pattern_counts_validation() {
        assert_eq!(
            PatternCounts::from_outcomes(std::iter::empty::<&[u8]>()),
            Err(InferenceError::EmptyInput)
        );
        let ragged: Vec<&[u8]> = vec![&[0, 1], &[0]];
        assert!(matches!(PatternCounts::from_outcomes(ragged), Err(InferenceError::RaggedRecords { .. })));
        let bad: Vec<&[u8]> = vec![&[0, 2]];
        assert!(matches!(PatternCounts::from_outcomes(bad), Err(InferenceError::NonBinaryOutcome { .. })));
    }

    #[test]
    fn unanimous_closed_form() {
        let mut trials = repeat(&[0, 0], 7);
        trials.extend(repeat(&[1, 1], 3));
        let data = counts(&trials);
        let ll = loglik_unanimous(&data, p(0.36), &ErrorModel::perfect(2)).unwrap();
        let expected = 7.0 * 0.36f64.ln() + 3.0 * 0.64f64.ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn mixed_trial_forbidden_without_misreads() {
        let data = counts(&[&[0, 0], &[0, 1]]);
        let ll = loglik_unanimous(&data, p(0.5), &ErrorModel::perfect(2)).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
        let v = decide(&data, p(0.5), &ErrorModel::perfect(2), &DecisionRule::default()).unwrap();
        assert_eq!(v.decision, Decision::Binomial);
        assert_eq!(v.confidence, 1.0);
    }

    #[test]
    fn degenerate_state_signals_neg_infinity() {
        let data = counts(&[&[1, 1]]);
        let err = ErrorModel::perfect(2);
        assert_eq!(loglik_unanimous(&data, p(1.0), &err).unwrap(), f64::NEG_INFINITY);
        assert_eq!(loglik_binomial(&data, p(1.0), &err).unwrap(), f64::NEG_INFINITY);
        let v = decide(&data, p(1.0), &err, &DecisionRule::default()).unwrap();
        assert_eq!(v.decision, Decision::Inconclusive);
    }

    #[test]
    fn unanimous_with_misreads() {
        let err = ErrorModel::new(vec![0.01, 0.01]).unwrap();
        // sigma = 0: 0.5 * 0.99 * 0.01; sigma = 1: 0.5 * 0.01 * 0.99.
        let direct = pattern_probability_unanimous(&[0, 1], p(0.5), &err);
        assert!((direct - 0.0099).abs() < 1e-15);
        let ll = loglik_unanimous(&counts(&[&[0, 1]]), p(0.5), &err).unwrap();
        assert!((ll - 0.0099f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn binomial_weights_without_misreads() {
        let err = ErrorModel::perfect(2);
        let q = p(0.36);
        assert!((pattern_probability_binomial(&[0, 1], q, &err) - 0.36 * 0.64).abs() < 1e-15);
        assert!((pattern_probability_binomial(&[0, 0], q, &err) - 0.36 * 0.36).abs() < 1e-15);
    }

    #[test]
    fn binomial_summary_bookkeeping() {
        // Oracle: enumerate labeled trials, then collapse the two mixed patterns.
        let (m0, m1, m01, m10) = (13usize, 21usize, 5usize, 4usize);
        let mut trials = repeat(&[0, 0], m0);
        trials.extend(repeat(&[1, 1], m1));
        trials.extend(repeat(&[0, 1], m01));
        trials.extend(repeat(&[1, 0], m10));
        let (p0, p1) = (0.36f64, 0.64f64);
        let m = (m01 + m10) as f64;
        let closed = m0 as f64 * 2.0 * p0.ln() + m1 as f64 * 2.0 * p1.ln() + m * (p0 * p1).ln() + m * 2f64.ln();

        let summary = summarize_outcomes(trials.iter().copied()).unwrap();
        let err = ErrorModel::perfect(2);
        let from_summary = loglik_binomial_summary(&summary, p(0.36), &err).unwrap();
        assert!((from_summary - closed).abs() < 1e-10);

        let labeled = loglik_binomial(&counts(&trials), p(0.36), &err).unwrap();
        assert!((labeled + m * 2f64.ln() - closed).abs() < 1e-10);
    }

    #[test]
    fn summary_needs_two_detectors() {
        let trials: Vec<&[u8]> = vec![&[0, 0, 0]];
        let summary = summarize_outcomes(trials).unwrap();
        assert_eq!(
            loglik_unanimous_summary(&summary, p(0.5), &ErrorModel::perfect(3)),
            Err(InferenceError::NotTwoDetectors(3))
        );
    }

    #[test]
    fn misread_absorption_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let q = p(rng.random_range(0.0..=1.0));
            let err = ErrorModel::new(vec![rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)]).unwrap();
            for pattern in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
                // Enumerate each detector's hidden outcome and its channel.
                let mut brute = 0.0;
                for s0 in 0..2u8 {
                    for s1 in 0..2u8 {
                        let flip = |a: usize, s: u8| {
                            if pattern[a] == s { 1.0 - err.eps()[a] } else { err.eps()[a] }
                        };
                        brute += q.of(s0) * q.of(s1) * flip(0, s0) * flip(1, s1);
                    }
                }
                let absorbed = pattern_probability_binomial(&pattern, q, &err);
                assert!((absorbed - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decisions() {
        let err = ErrorModel::perfect(2);
        let rule = DecisionRule::default();
        let mut trials = repeat(&[0, 0], 50);
        trials.extend(repeat(&[1, 1], 50));
        let v = decide(&counts(&trials), p(0.5), &err, &rule).unwrap();
        assert_eq!(v.decision, Decision::Unanimous);
        assert!((v.log_odds - 100.0 * 2f64.ln()).abs() < 1e-9);
        assert_eq!(v.log_odds, v.loglik_unanimous - v.loglik_binomial);

        // Mixed fraction near 2 p0 p1 with misreads so the unanimous law stays finite.
        let noisy = ErrorModel::new(vec![0.01, 0.01]).unwrap();
        let mut trials = repeat(&[0, 0], 25);
        trials.extend(repeat(&[1, 1], 25));
        trials.extend(repeat(&[0, 1], 25));
        trials.extend(repeat(&[1, 0], 25));
        let v = decide(&counts(&trials), p(0.5), &noisy, &rule).unwrap();
        assert!(v.log_odds.is_finite());
        assert_eq!(v.decision, Decision::Binomial);

        // Far too few trials at p0 = 0.99.
        let trials = repeat(&[0, 0], 10);
        let v = decide(&counts(&trials), p(0.99), &err, &rule).unwrap();
        assert_eq!(v.decision, Decision::Inconclusive);
        assert!(10 < required_trials(p(0.99), 0.01, &err).unwrap());

        assert!(decide(&counts(&trials), p(0.5), &err, &DecisionRule { log_odds_threshold: 0.0, prior_log_odds: 0.0 }).is_err());
    }

    #[test]
    fn prior_shifts_decision() {
        let err = ErrorModel::perfect(2);
        let trials = repeat(&[0, 0], 3);
        let data = counts(&trials);
        let plain = decide(&data, p(0.5), &err, &DecisionRule::default()).unwrap();
        assert_eq!(plain.decision, Decision::Inconclusive);
        let biased = decide(&data, p(0.5), &err, &DecisionRule { prior_log_odds: 3.0, ..Default::default() }).unwrap();
        assert_eq!(biased.decision, Decision::Unanimous);
        assert_eq!(biased.log_odds, plain.log_odds);
    }

    #[test]
    fn required_trials_examples() {
        let err = ErrorModel::perfect(2);
        assert_eq!(required_trials(p(0.5), (-1.0f64).exp(), &err), Ok(2));
        assert_eq!(required_trials(p(0.5), 1.0, &err), Ok(1));
        assert_eq!(required_trials(p(1.0), 0.01, &err), Err(InferenceError::NoDiscrimination));
        assert_eq!(required_trials(p(0.5), 0.0, &err), Err(InferenceError::InvalidAlpha(0.0)));

        // Oracle: iterate (1 - q)^M directly.
        let power_iteration = |q: f64, alpha: f64| -> u64 {
            let mut survive = 1.0;
            let mut m = 0;
            loop {
                m += 1;
                survive *= 1.0 - q;
                if survive <= alpha {
                    return m;
                }
            }
        };
        assert_eq!(power_iteration(0.0198, 0.001), 346);
        assert_eq!(required_trials(p(0.99), 0.001, &err), Ok(346));
        for &(p0, alpha) in &[(0.5, 0.05), (0.9, 0.01), (0.7, 0.001), (0.995, 0.01)] {
            let q = 2.0 * p0 * (1.0 - p0);
            assert_eq!(required_trials(p(p0), alpha, &err).unwrap(), power_iteration(q, alpha), "{p0} {alpha}");
        }
    }

    #[test]
    fn required_trials_asymptotics() {
        let err = ErrorModel::perfect(2);
        for &p0 in &[0.99, 0.995, 0.999] {
            for &alpha in &[0.05, 0.01, 0.001] {
                let q = 2.0 * p0 * (1.0 - p0);
                let m = required_trials(p(p0), alpha, &err).unwrap() as f64;
                let ratio = m * q / (1.0 / alpha).ln();
                assert!((ratio - 1.0).abs() < 0.05, "{p0} {alpha} {ratio}");
            }
        }
    }

    #[test]
    fn misreads_raise_disagreement_rate() {
        let q0 = binomial_disagreement_probability(p(0.99), &ErrorModel::perfect(2));
        let q1 = binomial_disagreement_probability(p(0.99), &ErrorModel::new(vec![0.01, 0.01]).unwrap());
        assert!((q0 - 0.0198).abs() < 1e-15);
        assert!(q1 > q0);
    }

    proptest! {
        #[test]
        fn required_trials_monotone(p0 in 0.01..0.99f64, dp in 0.0..0.2f64, alpha in 0.001..0.5f64, da in 0.0..0.4f64) {
            let err = ErrorModel::perfect(2);
            // Moving p0 toward 1/2 raises p0 p1.
            let closer = if p0 < 0.5 { (p0 + dp).min(0.5) } else { (p0 - dp).max(0.5) };
            let far = required_trials(p(p0), alpha, &err).unwrap();
            let near = required_trials(p(closer), alpha, &err).unwrap();
            prop_assert!(near <= far);
            let looser = required_trials(p(p0), (alpha + da).min(1.0), &err).unwrap();
            prop_assert!(looser <= far);
        }

        #[test]
        fn unanimous_data_favour_unanimous_law(p0 in 0.01..0.99f64, zeros in 0usize..40, ones in 0usize..40) {
            prop_assume!(zeros + ones > 0);
            let mut trials = repeat(&[0, 0], zeros);
            trials.extend(repeat(&[1, 1], ones));
            let data = counts(&trials);
            let err = ErrorModel::perfect(2);
            let u = loglik_unanimous(&data, p(p0), &err).unwrap();
            let b = loglik_binomial(&data, p(p0), &err).unwrap();
            prop_assert!(u > b);
        }
    }
}
