//! Trial-record CSV and JSON reports.
//!
//! Records CSV layout:
//!
//! ```text
//! # simulmeas config={...resolved config...}
//! trial,latent,reading_1,...,reading_N,outcome_1,...,outcome_N
//! 0,1,12.5,11.9,1,1
//! ```
//!
//! Readings are pointer positions for oscillators (in the config's unit
//! system), currents in nA for QPCs and the bits themselves for ideal
//! detectors. The latent column is empty when the scenario has no shared σ.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigFile, ResolvedConfig};
use crate::experiment::{DetectorModel, ExperimentSummary, TrialRecord};
use crate::inference::{Decision, ScenarioVerdict};

pub const CONFIG_COMMENT_PREFIX: &str = "# simulmeas config=";

const AMPERE_TO_NANOAMPERE: f64 = 1e9;

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("records file has no header")]
    MissingHeader,
    #[error("records file has no trials")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn reading_scale(model: &DetectorModel) -> f64 {
    match model {
        DetectorModel::Qpc { .. } => AMPERE_TO_NANOAMPERE,
        _ => 1.0,
    }
}

/// Streams trial records as CSV. Formatting uses the shortest round-trip
/// representation, so output bytes depend only on the record values.
pub struct RecordWriter<W: Write> {
    out: W,
    n_detectors: usize,
    scale: f64,
    line: String,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, config: &ResolvedConfig) -> io::Result<Self> {
        let echo = serde_json::to_string(&config.file.to_value()).map_err(io::Error::other)?;
        writeln!(out, "{CONFIG_COMMENT_PREFIX}{echo}")?;
        let n = config.experiment.n_detectors;
        let mut header = String::from("trial,latent");
        for a in 1..=n {
            header.push_str(&format!(",reading_{a}"));
        }
        for a in 1..=n {
            header.push_str(&format!(",outcome_{a}"));
        }
        writeln!(out, "{header}")?;
        Ok(Self {
            out,
            n_detectors: n,
            scale: reading_scale(&config.experiment.detector),
            line: String::new(),
        })
    }

    pub fn write(&mut self, record: &TrialRecord) -> io::Result<()> {
        use std::fmt::Write as _;
        debug_assert_eq!(record.outcomes.len(), self.n_detectors);
        self.line.clear();
        let _ = write!(self.line, "{},", record.index);
        if let Some(l) = record.latent {
            let _ = write!(self.line, "{l}");
        }
        for r in &record.raw_readings {
            let _ = write!(self.line, ",{}", r * self.scale);
        }
        for o in &record.outcomes {
            let _ = write!(self.line, ",{o}");
        }
        self.line.push('\n');
        self.out.write_all(self.line.as_bytes())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub trial: u64,
    pub latent: Option<u8>,
    pub readings: Vec<f64>,
    pub outcomes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordsFile {
    /// Config echoed in the leading comment, if present.
    pub config: Option<ConfigFile>,
    pub n_detectors: usize,
    pub rows: Vec<RecordRow>,
}

impl RecordsFile {
    pub fn outcomes(&self) -> impl Iterator<Item = &[u8]> {
        self.rows.iter().map(|r| r.outcomes.as_slice())
    }
}

fn malformed(line: u64, message: impl Into<String>) -> RecordsError {
    RecordsError::Malformed {
        line,
        message: message.into(),
    }
}

/// Detector count implied by a header row, checking the column names.
fn parse_header(fields: &csv::StringRecord, line: u64) -> Result<usize, RecordsError> {
    let cols: Vec<&str> = fields.iter().collect();
    if cols.len() < 4 || (cols.len() - 2) % 2 != 0 || cols[0] != "trial" || cols[1] != "latent" {
        return Err(malformed(
            line,
            "expected header trial,latent,reading_1..reading_N,outcome_1..outcome_N",
        ));
    }
    let n = (cols.len() - 2) / 2;
    for a in 0..n {
        let (r, o) = (cols[2 + a], cols[2 + n + a]);
        if r != format!("reading_{}", a + 1) || o != format!("outcome_{}", a + 1) {
            return Err(malformed(line, format!("unexpected column names '{r}', '{o}'")));
        }
    }
    Ok(n)
}

/// Reads a records CSV. Errors carry the 1-based line number of the bad row.
pub fn read_records<R: Read>(input: R) -> Result<RecordsFile, RecordsError> {
    let mut reader = io::BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let mut line_offset = 0u64;
    let mut config = None;
    let rest_prefix = if let Some(json) = first.strip_prefix(CONFIG_COMMENT_PREFIX) {
        line_offset = 1;
        let cfg = ConfigFile::from_json_str(json.trim_end())
            .map_err(|e| malformed(1, format!("embedded config: {e}")))?;
        config = Some(cfg);
        String::new()
    } else {
        first
    };

    let chained = io::Cursor::new(rest_prefix.into_bytes()).chain(reader);
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(chained);

    let mut record = csv::StringRecord::new();
    let line_of = |record: &csv::StringRecord| {
        record.position().map_or(0, |p| p.line()) + line_offset
    };
    let read_next = |csv: &mut csv::Reader<_>, record: &mut csv::StringRecord| {
        csv.read_record(record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line()) + line_offset;
            malformed(line, e.to_string())
        })
    };

    if !read_next(&mut csv, &mut record)? {
        return Err(RecordsError::MissingHeader);
    }
    let n = parse_header(&record, line_of(&record))?;
    let width = 2 + 2 * n;

    let mut rows = Vec::new();
    while read_next(&mut csv, &mut record)? {
        let line = line_of(&record);
        if record.len() != width {
            return Err(malformed(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let trial: u64 = record[0]
            .parse()
            .map_err(|_| malformed(line, format!("bad trial index '{}'", &record[0])))?;
        let latent = match &record[1] {
            "" => None,
            s => Some(
                s.parse::<u8>()
                    .map_err(|_| malformed(line, format!("bad latent value '{s}'")))?,
            ),
        };
        let mut readings = Vec::with_capacity(n);
        for a in 0..n {
            let s = &record[2 + a];
            readings.push(
                s.parse::<f64>()
                    .map_err(|_| malformed(line, format!("bad reading_{} '{s}'", a + 1)))?,
            );
        }
        let mut outcomes = Vec::with_capacity(n);
        for a in 0..n {
            let s = &record[2 + n + a];
            outcomes.push(
                s.parse::<u8>()
                    .map_err(|_| malformed(line, format!("bad outcome_{} '{s}'", a + 1)))?,
            );
        }
        rows.push(RecordRow {
            trial,
            latent,
            readings,
            outcomes,
        });
    }
    if rows.is_empty() {
        return Err(RecordsError::Empty);
    }
    Ok(RecordsFile {
        config,
        n_detectors: n,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SummaryReport {
    pub M: u64,
    pub M0: u64,
    pub M1: u64,
    pub m: u64,
    pub histogram_n0: Vec<u64>,
    pub agreement_fraction: f64,
    pub config_echo: serde_json::Value,
    pub seed: u64,
}

impl SummaryReport {
    pub fn new(summary: &ExperimentSummary, config: &ResolvedConfig) -> Self {
        Self {
            M: summary.n_trials,
            M0: summary.m0_unanimous_zero,
            M1: summary.m1_unanimous_one,
            m: summary.disagreements,
            histogram_n0: summary.histogram_n0.clone(),
            agreement_fraction: summary.agreement_fraction,
            config_echo: config.file.to_value(),
            seed: config.experiment.seed,
        }
    }
}

/// Log-likelihoods of `-inf` serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct VerdictReport {
    pub loglik_H1: Option<f64>,
    pub loglik_H2: Option<f64>,
    pub log_odds: f64,
    pub decision: Decision,
    pub confidence: f64,
    pub M_used: u64,
    /// `None` when the two scenarios cannot be told apart.
    pub M_required_alpha: Option<u64>,
    pub alpha: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl VerdictReport {
    pub fn new(verdict: &ScenarioVerdict, required: Option<u64>, alpha: f64) -> Self {
        Self {
            loglik_H1: finite(verdict.loglik_unanimous),
            loglik_H2: finite(verdict.loglik_binomial),
            log_odds: verdict.log_odds,
            decision: verdict.decision,
            confidence: verdict.confidence,
            M_used: verdict.trials_used,
            M_required_alpha: required,
            alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorDiagnostic {
    pub detector: usize,
    /// `X/dx` for oscillators, `D` for QPCs.
    pub separation: f64,
    pub misread: f64,
    /// QPC only: closed-form bound on either midpoint misread.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub misread_bound: Option<f64>,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredTrialsRow {
    pub alpha: f64,
    pub m_required: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminabilityReport {
    pub model: String,
    /// `"X/dx"` or `"D"`.
    pub separation_measure: String,
    pub reliable_threshold: f64,
    pub p0: f64,
    pub detectors: Vec<DetectorDiagnostic>,
    pub required_trials: Vec<RequiredTrialsRow>,
    pub warnings: Vec<String>,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
