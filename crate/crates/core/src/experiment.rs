//! M-trial Monte Carlo runs: a scenario law feeding an optional physical detector layer.
//!
//! Every trial owns a ChaCha8 stream keyed by the run seed and selected by
//! the trial index, and draws in a fixed order (scenario pattern, then
//! detector 1..N). Records therefore do not depend on which thread ran a
//! trial, and are always emitted in trial-index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::oscillator::{self, OscillatorError, OscillatorParams};
use crate::qpc::{self, QpcError, QpcParams, SamplingMode, ThresholdRule};
use crate::scenarios::{
    sample_binomial_trial, sample_custom_trial, sample_unanimous, CustomPmf, ScenarioError,
    ScenarioKind, TrialOutcome,
};
use crate::state::{born_probabilities, Amplitudes, OutcomeProbabilities};

/// Trials generated in parallel before being handed to the sink in order.
const CHUNK_TRIALS: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oscillator(#[from] OscillatorError),
    #[error(transparent)]
    Qpc(#[from] QpcError),
    #[error("no trial records")]
    EmptyInput,
    #[error("trial {index} has {found} outcomes, expected {expected}")]
    RaggedRecords {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorModel {
    /// Detectors report the scenario bits directly.
    Ideal,
    Oscillator {
        detectors: Vec<OscillatorParams>,
        constants: PhysicalConstants,
    },
    Qpc {
        detectors: Vec<QpcParams>,
        constants: PhysicalConstants,
        mode: SamplingMode,
        rule: ThresholdRule,
    },
}

impl DetectorModel {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorModel::Ideal => "ideal",
            DetectorModel::Oscillator { .. } => "oscillator",
            DetectorModel::Qpc { .. } => "qpc",
        }
    }

    fn n_params(&self) -> Option<usize> {
        match self {
            DetectorModel::Ideal => None,
            DetectorModel::Oscillator { detectors, .. } => Some(detectors.len()),
            DetectorModel::Qpc { detectors, .. } => Some(detectors.len()),
        }
    }

    /// Fails if some detector cannot produce a meaningful thresholded outcome.
    pub fn check_readout(&self) -> Result<(), ExperimentError> {
        match self {
            DetectorModel::Ideal => {}
            DetectorModel::Oscillator { detectors, .. } => {
                for p in detectors {
                    let ratio = oscillator::distinguishability_ratio(p);
                    if !(ratio >= 1.0) {
                        return Err(OscillatorError::NotDistinguishable { ratio }.into());
                    }
                }
            }
            DetectorModel::Qpc { detectors, constants, .. } => {
                for p in detectors {
                    if p.t_given_0 == p.t_given_1 {
                        return Err(QpcError::NoContrast(p.t_given_0).into());
                    }
                    qpc::attempts(p, constants)?;
                }
            }
        }
        Ok(())
    }

    /// Per-detector probability of reporting the wrong outcome, averaged over the two outcomes.
    pub fn misread_estimates(&self, n_detectors: usize) -> Result<Vec<f64>, ExperimentError> {
        match self {
            DetectorModel::Ideal => Ok(vec![0.0; n_detectors]),
            DetectorModel::Oscillator { detectors, .. } => {
                Ok(detectors.iter().map(oscillator::misread_probability).collect())
            }
            DetectorModel::Qpc {
                detectors,
                constants,
                rule,
                ..
            } => detectors
                .iter()
                .map(|p| {
                    let [e0, e1] = qpc::misread_probabilities(p, constants, *rule)?;
                    Ok(0.5 * (e0 + e1))
                })
                .collect(),
        }
    }

    /// Per-detector separation figure: `X/dx` for oscillators, `D` for QPCs.
    pub fn separations(&self) -> Option<Vec<f64>> {
        match self {
            DetectorModel::Ideal => None,
            DetectorModel::Oscillator { detectors, .. } => {
                Some(detectors.iter().map(oscillator::distinguishability_ratio).collect())
            }
            DetectorModel::Qpc {
                detectors,
                constants,
                ..
            } => Some(
                detectors
                    .iter()
                    .map(|p| qpc::discriminability(p, constants))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub state: Amplitudes,
    pub scenario: ScenarioKind,
    pub detector: DetectorModel,
    pub n_detectors: usize,
    pub n_trials: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn probabilities(&self) -> OutcomeProbabilities {
        born_probabilities(&self.state)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_trials < 1 {
            return Err(ExperimentError::InvalidConfig("n_trials must be >= 1".into()));
        }
        if self.n_detectors < 2 {
            return Err(ExperimentError::InvalidConfig(
                "n_detectors must be >= 2 for agreement statistics".into(),
            ));
        }
        if let Some(n) = self.detector.n_params() {
            if n != self.n_detectors {
                return Err(ExperimentError::InvalidConfig(format!(
                    "{} detector parameter sets for n_detectors = {}",
                    n, self.n_detectors
                )));
            }
        }
        if let ScenarioKind::Custom { pmf } = &self.scenario {
            let pmf = CustomPmf::unchecked(pmf.clone());
            pmf.validate(self.probabilities())?;
            if pmf.n_detectors() != self.n_detectors {
                return Err(ScenarioError::InvalidPmf(format!(
                    "law covers N = {} detectors, n_detectors = {}",
                    pmf.n_detectors(),
                    self.n_detectors
                ))
                .into());
            }
        }
        match &self.detector {
            DetectorModel::Ideal => {}
            DetectorModel::Oscillator { detectors, .. } => {
                for p in detectors {
                    p.validate()?;
                }
            }
            DetectorModel::Qpc { detectors, .. } => {
                for p in detectors {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: u64,
    pub latent: Option<u8>,
    /// Pointer positions or currents (SI); for ideal detectors the bits themselves.
    pub raw_readings: Vec<f64>,
    pub outcomes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub n_trials: u64,
    pub m0_unanimous_zero: u64,
    pub m1_unanimous_one: u64,
    pub disagreements: u64,
    /// `histogram_n0[k]` counts trials in which exactly `k` detectors read 0.
    pub histogram_n0: Vec<u64>,
    pub agreement_fraction: f64,
}

impl ExperimentSummary {
    pub fn disagreement_fraction(&self) -> f64 {
        self.disagreements as f64 / self.n_trials as f64
    }
}

#[derive(Debug, Clone)]
struct SummaryBuilder {
    m0: u64,
    m1: u64,
    mixed: u64,
    hist: Vec<u64>,
}

impl SummaryBuilder {
    fn new(n_detectors: usize) -> Self {
        Self {
            m0: 0,
            m1: 0,
            mixed: 0,
            hist: vec![0; n_detectors + 1],
        }
    }

    fn add(&mut self, outcomes: &[u8]) {
        let zeros = outcomes.iter().filter(|&&b| b == 0).count();
        if zeros == outcomes.len() {
            self.m0 += 1;
        } else if outcomes.iter().all(|&b| b == 1) {
            self.m1 += 1;
        } else {
            self.mixed += 1;
        }
        self.hist[zeros] += 1;
    }

    fn finish(self) -> ExperimentSummary {
        let n = self.m0 + self.m1 + self.mixed;
        ExperimentSummary {
            n_trials: n,
            m0_unanimous_zero: self.m0,
            m1_unanimous_one: self.m1,
            disagreements: self.mixed,
            histogram_n0: self.hist,
            agreement_fraction: if n == 0 {
                0.0
            } else {
                (self.m0 + self.m1) as f64 / n as f64
            },
        }
    }
}

/// Counts unanimous and mixed trials and builds the `N0` histogram.
pub fn summarize(records: &[TrialRecord]) -> Result<ExperimentSummary, ExperimentError> {
    summarize_outcomes(records.iter().map(|r| r.outcomes.as_slice()))
}

pub fn summarize_outcomes<'a, I>(outcomes: I) -> Result<ExperimentSummary, ExperimentError>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut iter = outcomes.into_iter();
    let first = iter.next().ok_or(ExperimentError::EmptyInput)?;
    let n = first.len();
    let mut builder = SummaryBuilder::new(n);
    builder.add(first);
    for (i, o) in iter.enumerate() {
        if o.len() != n {
            return Err(ExperimentError::RaggedRecords {
                index: i + 1,
                expected: n,
                found: o.len(),
            });
        }
        builder.add(o);
    }
    Ok(builder.finish())
}

/// The independent random stream of trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates one trial; pure in `(config, index)`.
pub fn run_trial(config: &ExperimentConfig, index: u64) -> Result<TrialRecord, ExperimentError> {
    let mut rng = trial_rng(config.seed, index);
    let probs = config.probabilities();
    let n = config.n_detectors;
    let TrialOutcome {
        outcomes: bits,
        latent_sigma,
    } = match &config.scenario {
        ScenarioKind::Unanimous => sample_unanimous(probs, n, &mut rng),
        ScenarioKind::Binomial => sample_binomial_trial(probs, n, &mut rng),
        ScenarioKind::Custom { pmf } => {
            sample_custom_trial(&CustomPmf::unchecked(pmf.clone()), n, &mut rng)?
        }
    };

    let (raw_readings, outcomes) = match &config.detector {
        DetectorModel::Ideal => (bits.iter().map(|&b| f64::from(b)).collect(), bits),
        DetectorModel::Oscillator { detectors, .. } => {
            let mut readings = Vec::with_capacity(n);
            let mut outcomes = Vec::with_capacity(n);
            for (p, &sigma) in detectors.iter().zip(&bits) {
                let x = oscillator::sample_pointer(p, sigma, &mut rng);
                outcomes.push(oscillator::readout(x, p)?);
                readings.push(x.x);
            }
            (readings, outcomes)
        }
        DetectorModel::Qpc {
            detectors,
            constants,
            mode,
            rule,
        } => {
            let mut readings = Vec::with_capacity(n);
            let mut outcomes = Vec::with_capacity(n);
            for (p, &sigma) in detectors.iter().zip(&bits) {
                let sample = qpc::sample_current(p, sigma, &mut rng, *mode, constants)?;
                outcomes.push(qpc::current_readout(sample.current, p, constants, *rule)?);
                readings.push(sample.current);
            }
            (readings, outcomes)
        }
    };

    Ok(TrialRecord {
        index,
        latent: latent_sigma,
        raw_readings,
        outcomes,
    })
}

/// Execution knobs that never change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Runs all trials and hands each record to `sink` in trial-index order.
///
/// At most one chunk of records is held in memory, so arbitrarily long runs
/// can be streamed to disk.
pub fn run_experiment_streaming<F>(
    config: &ExperimentConfig,
    options: RunOptions,
    mut sink: F,
) -> Result<ExperimentSummary, ExperimentError>
where
    F: FnMut(&TrialRecord) -> std::io::Result<()>,
{
    config.validate()?;
    config.detector.check_readout()?;

    let pool = options
        .threads
        .map(|threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| ExperimentError::ThreadPool(e.to_string()))
        })
        .transpose()?;
    let generate = |start: u64, end: u64| -> Result<Vec<TrialRecord>, ExperimentError> {
        (start..end)
            .into_par_iter()
            .map(|i| run_trial(config, i))
            .collect()
    };

    let mut builder = SummaryBuilder::new(config.n_detectors);
    let mut start = 0u64;
    while start < config.n_trials {
        let end = (start + CHUNK_TRIALS).min(config.n_trials);
        let chunk = match &pool {
            Some(pool) => pool.install(|| generate(start, end))?,
            None => generate(start, end)?,
        };
        for record in &chunk {
            builder.add(&record.outcomes);
            sink(record)?;
        }
        start = end;
    }
    Ok(builder.finish())
}

pub fn run_experiment(
    config: &ExperimentConfig,
) -> Result<(Vec<TrialRecord>, ExperimentSummary), ExperimentError> {
    run_experiment_with(config, RunOptions::default())
}

pub fn run_experiment_with(
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<(Vec<TrialRecord>, ExperimentSummary), ExperimentError> {
    let mut records = Vec::with_capacity(config.n_trials.min(CHUNK_TRIALS * 16) as usize);
    let summary = run_experiment_streaming(config, options, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::binomial_pmf;
    use crate::stats::chi_square_gof;

    fn ideal(p0: f64, scenario: ScenarioKind, n_detectors: usize, n_trials: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            state: Amplitudes::from_p0(p0).unwrap(),
            scenario,
            detector: DetectorModel::Ideal,
            n_detectors,
            n_trials,
            seed,
        }
    }

    fn rec(outcomes: &[u8]) -> TrialRecord {
        TrialRecord {
            index: 0,
            latent: None,
            raw_readings: outcomes.iter().map(|&b| f64::from(b)).collect(),
            outcomes: outcomes.to_vec(),
        }
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[rec(&[0, 0])]).unwrap();
        assert_eq!((s.m0_unanimous_zero, s.disagreements), (1, 0));
        let s = summarize(&[rec(&[0, 1]), rec(&[1, 0])]).unwrap();
        assert_eq!(s.disagreements, 2);
        assert_eq!(s.histogram_n0, vec![0, 2, 0]);
        assert_eq!(s.agreement_fraction, 0.0);
        assert!(matches!(summarize(&[]), Err(ExperimentError::EmptyInput)));
        assert!(matches!(
            summarize(&[rec(&[0, 1]), rec(&[0, 1, 1])]),
            Err(ExperimentError::RaggedRecords { index: 1, expected: 2, found: 3 })
        ));
    }

    #[test]
    fn unanimous_certain_state() {
        let (records, s) = run_experiment(&ideal(1.0, ScenarioKind::Unanimous, 2, 100, 1)).unwrap();
        assert_eq!(records.len(), 100);
        assert_eq!((s.m0_unanimous_zero, s.disagreements), (100, 0));
        assert!(records.iter().all(|r| r.latent == Some(0)));
    }

    #[test]
    fn binomial_disagreement_rate() {
        let (_, s) = run_experiment(&ideal(0.5, ScenarioKind::Binomial, 2, 100_000, 42)).unwrap();
        assert!((s.disagreement_fraction() - 0.5).abs() <= 0.006, "{}", s.disagreement_fraction());
        assert_eq!(s.m0_unanimous_zero + s.m1_unanimous_one + s.disagreements, 100_000);
    }

    #[test]
    fn histogram_matches_binomial_law() {
        let (_, s) = run_experiment(&ideal(0.36, ScenarioKind::Binomial, 10, 100_000, 3)).unwrap();
        assert_eq!(s.histogram_n0.iter().sum::<u64>(), 100_000);
        let probs = OutcomeProbabilities::new(0.36).unwrap();
        let expected: Vec<f64> = (0..=10).map(|k| binomial_pmf(10, k, probs).unwrap()).collect();
        let fit = chi_square_gof(&s.histogram_n0, &expected).unwrap();
        assert!(fit.p_value > 0.001, "{fit:?}");
    }

    #[test]
    fn unanimous_ideal_never_disagrees() {
        for seed in 0..5 {
            let (_, s) = run_experiment(&ideal(0.37, ScenarioKind::Unanimous, 5, 2000, seed)).unwrap();
            assert_eq!(s.disagreements, 0);
            assert_eq!(s.histogram_n0[1..5].iter().sum::<u64>(), 0);
        }
    }

    #[test]
    fn custom_scenario_runs() {
        let pmf = vec![0.3, 0.0, 0.0, 0.7];
        let (records, s) = run_experiment(&ideal(0.7, ScenarioKind::Custom { pmf }, 3, 500, 9)).unwrap();
        assert_eq!(s.disagreements, 0);
        assert!(records.iter().all(|r| r.latent.is_none()));
        let bad = ideal(0.5, ScenarioKind::Custom { pmf: vec![0.3, 0.0, 0.0, 0.7] }, 3, 10, 9);
        assert!(matches!(run_experiment(&bad), Err(ExperimentError::Scenario(_))));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let config = ideal(0.41, ScenarioKind::Binomial, 3, 150_000, 77);
        let (a, sa) = run_experiment_with(&config, RunOptions { threads: Some(1) }).unwrap();
        let (b, sb) = run_experiment_with(&config, RunOptions { threads: Some(4) }).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(a.iter().enumerate().all(|(i, r)| r.index == i as u64));
    }

    #[test]
    fn trial_is_pure_function_of_seed_and_index() {
        let config = ideal(0.5, ScenarioKind::Binomial, 4, 10, 5);
        let (records, _) = run_experiment(&config).unwrap();
        assert_eq!(run_trial(&config, 7).unwrap(), records[7]);
        let other = ExperimentConfig { seed: 6, ..config.clone() };
        let differs = (0..10).any(|i| run_trial(&other, i).unwrap() != records[i as usize]);
        assert!(differs);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ideal(0.5, ScenarioKind::Binomial, 2, 0, 1);
        assert!(run_experiment(&c).is_err());
        c.n_trials = 10;
        c.n_detectors = 1;
        assert!(run_experiment(&c).is_err());
        c.n_detectors = 2;
        c.detector = DetectorModel::Qpc {
            detectors: vec![qpc::QpcParams {
                bias_voltage: 1e-4,
                observation_time: 1e-7,
                t_given_0: 0.3,
                t_given_1: 0.7,
            }],
            constants: PhysicalConstants::SI,
            mode: SamplingMode::Gaussian,
            rule: ThresholdRule::Midpoint,
        };
        assert!(matches!(run_experiment(&c), Err(ExperimentError::InvalidConfig(_))));
    }

    #[test]
    fn model_errors_surface() {
        let osc = OscillatorParams {
            mass: 1.0,
            omega: 1.0,
            beta: 1.0,
            coupling_lambda: 0.0,
            relaxation_rate: 1.0,
            measurement_time: 10.0,
        };
        let mut c = ideal(0.5, ScenarioKind::Binomial, 2, 10, 1);
        c.detector = DetectorModel::Oscillator {
            detectors: vec![osc; 2],
            constants: PhysicalConstants::NATURAL,
        };
        assert!(matches!(
            run_experiment(&c),
            Err(ExperimentError::Oscillator(OscillatorError::NotDistinguishable { .. }))
        ));
        let flat = QpcParams {
            bias_voltage: 1e-4,
            observation_time: 1e-7,
            t_given_0: 0.4,
            t_given_1: 0.4,
        };
        c.detector = DetectorModel::Qpc {
            detectors: vec![flat; 2],
            constants: PhysicalConstants::SI,
            mode: SamplingMode::Gaussian,
            rule: ThresholdRule::Midpoint,
        };
        assert!(matches!(run_experiment(&c), Err(ExperimentError::Qpc(QpcError::NoContrast(_)))));
    }

    #[test]
    fn oscillator_unanimous_misreads_are_rare() {
        let osc = OscillatorParams {
            mass: 1.0,
            omega: 1.0,
            beta: 16.0,
            coupling_lambda: 1.0,
            relaxation_rate: 1.0,
            measurement_time: 10.0,
        };
        let mut c = ideal(0.5, ScenarioKind::Unanimous, 2, 20_000, 4);
        c.detector = DetectorModel::Oscillator {
            detectors: vec![osc; 2],
            constants: PhysicalConstants::NATURAL,
        };
        let (records, s) = run_experiment(&c).unwrap();
        let eps = oscillator::misread_probability(&osc);
        let bound = 2.0 * eps * 20_000.0 + 4.0 * (20_000f64).sqrt();
        assert!((s.disagreements as f64) <= bound);
        assert!(s.disagreements > 0);
        // Readings follow the latent outcome.
        for r in records.iter().take(100) {
            let centre = f64::from(r.latent.unwrap());
            assert!(r.raw_readings.iter().all(|x| (x - centre).abs() < 2.0));
        }
    }
}
