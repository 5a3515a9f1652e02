use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use simulmeas::config::{ConfigError, ConfigFile, ResolvedConfig};
use simulmeas::experiment::{run_experiment_streaming, DetectorModel, ExperimentError, RunOptions};
use simulmeas::inference::{Decision, InferenceError};
use simulmeas::oscillator::{write_density_grid, OscillatorError};
use simulmeas::output::{read_records, to_json_pretty, RecordWriter, RecordsError, SummaryReport};
use simulmeas::pipeline::{discriminability_report, verdict, PipelineError};
use simulmeas::qpc::QpcError;
use simulmeas::sweep::{run_sweep, write_sweep_csv, SweepSpec};

const EXIT_CONFIG: u8 = 1;
const EXIT_MODEL: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

/// Simulate simultaneous multi-detector measurements of a two-level system
/// and decide which outcome law the data support.
#[derive(Parser, Debug)]
#[command(name = "simulmeas", version, about)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment; write records CSV and summary JSON.
    Simulate(SimulateArgs),
    /// Decide between the unanimous and binomial laws from a records CSV.
    Infer(InferArgs),
    /// Report per-detector separation, misread estimates and required trials.
    Discriminability(DiscriminabilityArgs),
    /// Run one experiment per value of a numeric config field.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Never changes results.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Outputs to write.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json])]
    format: Vec<Format>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Records CSV written by `simulate`.
    #[arg(long)]
    records: PathBuf,
    /// Config giving the state, detectors and decision rule; defaults to the
    /// config embedded in the records file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiscriminabilityArgs {
    #[arg(long)]
    config: PathBuf,
    /// Oscillator only: write both joint densities of detectors 1 and 2 on a grid.
    #[arg(long)]
    density_grid: Option<PathBuf>,
    /// Grid points per axis for --density-grid.
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dotted config path, `*` for every array element
    /// (e.g. `detector.detectors.*.observation_time_ns`).
    #[arg(long)]
    field: String,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    /// Grid points, endpoints included.
    #[arg(long)]
    steps: usize,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::config(format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::config(format!("config error in {e}"))
    }
}

impl From<RecordsError> for Failure {
    fn from(e: RecordsError) -> Self {
        Self::config(format!("records: {e}"))
    }
}

fn model_error_name(e: &ExperimentError) -> Option<&'static str> {
    match e {
        ExperimentError::Qpc(QpcError::NoContrast(_)) => Some("NoContrast"),
        ExperimentError::Qpc(QpcError::TooFewAttempts(_)) => Some("TooFewAttempts"),
        ExperimentError::Oscillator(OscillatorError::NotDistinguishable { .. }) => {
            Some("NotDistinguishable")
        }
        _ => None,
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match model_error_name(&e) {
            Some(name) => Self {
                code: EXIT_MODEL,
                message: format!("{name}: {e}"),
            },
            None => Self::config(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(e) => e.into(),
            PipelineError::Records(e) => e.into(),
            PipelineError::Model(e) => e.into(),
            PipelineError::Inference(e @ InferenceError::InvalidMisread(_)) => Self {
                code: EXIT_MODEL,
                message: e.to_string(),
            },
            PipelineError::Inference(e) => Self::config(e),
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ResolvedConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut file = ConfigFile::from_json_str(&text)?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let resolved = file.resolve()?;
    for w in &resolved.warnings {
        warn!("{w}");
    }
    Ok(resolved)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let config = load_config(&args.run.config, args.run.seed)?;
    config.experiment.detector.check_readout()?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;

    let options = RunOptions {
        threads: args.run.threads,
    };
    let csv_path = args.out.join("records.csv");
    let summary = if args.format.contains(&Format::Csv) {
        let file = File::create(&csv_path).map_err(|e| Failure::io(&csv_path, e))?;
        let mut writer =
            RecordWriter::new(BufWriter::new(file), &config).map_err(|e| Failure::io(&csv_path, e))?;
        let summary = run_experiment_streaming(&config.experiment, options, |r| writer.write(r))?;
        writer.finish().map_err(|e| Failure::io(&csv_path, e))?;
        info!("wrote {}", csv_path.display());
        summary
    } else {
        run_experiment_streaming(&config.experiment, options, |_| Ok(()))?
    };

    let report = to_json_pretty(&SummaryReport::new(&summary, &config));
    if args.format.contains(&Format::Json) {
        let path = args.out.join("summary.json");
        write_file(&path, &report)?;
        info!("wrote {}", path.display());
    }
    print!("{report}");
    Ok(0)
}

fn infer(args: InferArgs) -> Result<u8, Failure> {
    let file = File::open(&args.records).map_err(|e| Failure::io(&args.records, e))?;
    let records = read_records(file)?;
    let config = match (&args.config, &records.config) {
        (Some(path), _) => load_config(path, None)?,
        (None, Some(embedded)) => embedded.resolve()?,
        (None, None) => {
            return Err(Failure::config(
                "records file has no embedded config; pass --config",
            ))
        }
    };
    if records.n_detectors != config.experiment.n_detectors {
        return Err(Failure::config(format!(
            "records have {} detectors, config has n_detectors = {}",
            records.n_detectors, config.experiment.n_detectors
        )));
    }
    let report = verdict(&config, records.outcomes())?;
    print!("{}", to_json_pretty(&report));
    Ok(match report.decision {
        Decision::Inconclusive => EXIT_INCONCLUSIVE,
        _ => 0,
    })
}

fn discriminability(args: DiscriminabilityArgs) -> Result<u8, Failure> {
    let config = load_config(&args.config, None)?;
    let report = discriminability_report(&config)?;
    if let Some(path) = &args.density_grid {
        let DetectorModel::Oscillator { detectors, .. } = &config.experiment.detector else {
            return Err(Failure::config("--density-grid needs the oscillator model"));
        };
        let file = File::create(path).map_err(|e| Failure::io(path, e))?;
        write_density_grid(
            BufWriter::new(file),
            &detectors[0],
            &detectors[1],
            config.experiment.probabilities(),
            args.grid_points,
        )
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        info!("wrote {}", path.display());
    }
    print!("{}", to_json_pretty(&report));
    Ok(0)
}

fn sweep(args: SweepArgs) -> Result<u8, Failure> {
    let base = load_config(&args.run.config, args.run.seed)?.file;
    let spec = SweepSpec {
        field: args.field,
        from: args.from,
        to: args.to,
        steps: args.steps,
    };
    let rows = run_sweep(
        &base,
        &spec,
        RunOptions {
            threads: args.run.threads,
        },
    )?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::io(path, e))?;
            write_sweep_csv(BufWriter::new(file), &spec.field, &rows)
                .map_err(|e| Failure::io(path, e))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_sweep_csv(&mut lock, &spec.field, &rows)
                .and_then(|_| lock.flush())
                .map_err(|e| Failure::config(format!("stdout: {e}")))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Infer(a) => infer(a),
        Command::Discriminability(a) => discriminability(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
