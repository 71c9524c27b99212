//! `rspcert` command-line tool: simulate CHSH scenarios, analyze event
//! logs under the DI and SDI pipelines, and extract certified bits.
//!
//! Machine output is JSON on stdout; human summaries go to stderr. Exit
//! codes: 0 success (including zero-bit extraction), 2 input error,
//! 3 environment error.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use rspcert::error::Error;
use rspcert::events::{parse_event_log, write_event_log, EventRecord, LogFormat, StateLabel, BINARY_MAGIC};
use rspcert::extractor::{extract_certified, EntropyBudget, Pipeline, SeedSource};
use rspcert::finite_stats::{BoundMethod, ConfidenceSpec};
use rspcert::report::{analyze, human_summary, AnalysisConfig};
use rspcert::simulator::{BellState, ScenarioSpec, StateSpec};

const EXIT_INPUT: i32 = 2;
const EXIT_ENV: i32 = 3;

#[derive(Parser)]
#[command(name = "rspcert", version, about = "Certify and extract randomness from CHSH event data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log from a two-qubit scenario.
    Simulate(SimulateArgs),
    /// Run checks and both certification pipelines over an event log.
    Analyze(AnalyzeArgs),
    /// Extract certified output bits from an event log.
    Extract(ExtractArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hoeffding,
    #[value(name = "clopper_pearson")]
    ClopperPearson,
}

impl From<MethodArg> for BoundMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Hoeffding => BoundMethod::HoeffdingUnion,
            MethodArg::ClopperPearson => BoundMethod::ClopperPearsonUnion,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    #[value(name = "psi_plus")]
    PsiPlus,
    #[value(name = "psi_minus")]
    PsiMinus,
    Unlabeled,
}

impl From<StateArg> for StateLabel {
    fn from(s: StateArg) -> Self {
        match s {
            StateArg::PsiPlus => StateLabel::PsiPlus,
            StateArg::PsiMinus => StateLabel::PsiMinus,
            StateArg::Unlabeled => StateLabel::Unlabeled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BellArg {
    #[value(name = "psi_plus")]
    PsiPlus,
    #[value(name = "psi_minus")]
    PsiMinus,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Di,
    Sdi,
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset scenario: chsh_optimal or bbm92.
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario description file (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Werner-state noise parameter z (state z|Ψ⁺⟩⟨Ψ⁺| + (1−z)I/4).
    #[arg(long, conflicts_with = "bell")]
    werner_z: Option<f64>,
    /// Pure Bell state to simulate.
    #[arg(long)]
    bell: Option<BellArg>,
    /// Number of events.
    #[arg(short = 'n', long = "events")]
    n: u64,
    /// RNG seed (the same seed reproduces the same log).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct CommonAnalysisArgs {
    /// Event log path.
    log: PathBuf,
    /// Config file (JSON) supplying defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Confidence level for the lower bounds (e.g. 0.99).
    #[arg(long)]
    confidence: Option<f64>,
    /// Concentration-bound method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Only analyze events carrying this label.
    #[arg(long, value_enum)]
    state: Option<StateArg>,
    /// Log format; auto detects by the binary magic.
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// Also write the JSON report to this path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonAnalysisArgs,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: CommonAnalysisArgs,
    /// Which certified budget feeds the extractor.
    #[arg(long, value_enum)]
    pipeline: PipelineArg,
    /// Hashing error parameter ε of the leftover-hash sizing.
    #[arg(long)]
    eps_hash: Option<f64>,
    /// Seed file (raw bytes, consumed MSB-first); OS entropy when omitted.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Output bit file (raw bytes, final partial byte zero-padded).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the process exit code.
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
    fn env(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ENV,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::SeedTooShort { .. } => CliError::env(e.to_string()),
            other => CliError::input(other.to_string()),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Extract(args) => cmd_extract(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn load_events(path: &Path, format: FormatArg) -> Result<Vec<EventRecord>, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::input(format!("cannot read log {}: {e}", path.display())))?;
    let format = match format {
        FormatArg::Csv => LogFormat::Csv,
        FormatArg::Bin => LogFormat::PackedBinary,
        FormatArg::Auto => {
            if bytes.starts_with(BINARY_MAGIC) {
                LogFormat::PackedBinary
            } else {
                LogFormat::Csv
            }
        }
    };
    Ok(parse_event_log(io::Cursor::new(bytes), format)?)
}

fn build_config(args: &CommonAnalysisArgs) -> Result<AnalysisConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("bad config {}: {e}", path.display())))?
        }
        None => AnalysisConfig::default(),
    };
    if args.confidence.is_some() || args.method.is_some() {
        let level = args.confidence.unwrap_or(config.confidence.level);
        let method = args.method.map(Into::into).unwrap_or(config.confidence.method);
        config.confidence = ConfidenceSpec::new(level, method)?;
    }
    if let Some(state) = args.state {
        config.state_filter = Some(state.into());
    }
    Ok(config)
}

fn emit_report<T: serde::Serialize>(value: &T, file: &Option<PathBuf>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::input(format!("serialization failed: {e}")))?;
    println!("{json}");
    if let Some(path) = file {
        fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::env(format!("cannot write report {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec = match (&args.scenario, &args.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::input(format!("cannot read scenario {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("bad scenario {}: {e}", path.display())))?
        }
        (None, Some(preset)) => {
            let state = match (args.werner_z, args.bell) {
                (Some(z), None) => StateSpec::Werner(z),
                (None, Some(BellArg::PsiPlus)) => StateSpec::Bell(BellState::PsiPlus),
                (None, Some(BellArg::PsiMinus)) => StateSpec::Bell(BellState::PsiMinus),
                _ => {
                    return Err(CliError::input(
                        "specify exactly one of --werner-z or --bell with --preset",
                    ))
                }
            };
            ScenarioSpec {
                state,
                preset: Some(preset.clone()),
                alice: None,
                bob: None,
            }
        }
        _ => return Err(CliError::input("specify exactly one of --preset or --scenario")),
    };
    let scenario = spec.build()?;
    let events = scenario.sample_events(args.n, args.seed);
    let format = match args.format {
        FormatArg::Bin => LogFormat::PackedBinary,
        _ => LogFormat::Csv,
    };
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| {
                CliError::env(format!("cannot create {}: {e}", path.display()))
            })?;
            write_event_log(io::BufWriter::new(file), &events, format)?;
        }
        None => {
            let stdout = io::stdout();
            write_event_log(stdout.lock(), &events, format)?;
        }
    }
    eprintln!(
        "wrote {} events ({})",
        events.len(),
        scenario.name.as_deref().unwrap_or("custom scenario")
    );
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let config = build_config(&args.common)?;
    let events = load_events(&args.common.log, args.common.format)?;
    let report = analyze(&events, &config)?;
    eprint!("{}", human_summary(&report));
    emit_report(&report, &args.common.report)
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let mut config = build_config(&args.common)?;
    if let Some(eps) = args.eps_hash {
        config.eps_hash = eps;
    }
    let events = load_events(&args.common.log, args.common.format)?;
    let analysis = analyze(&events, &config)?;
    let budget: EntropyBudget = match args.pipeline {
        PipelineArg::Di => (&analysis.di_budget).into(),
        PipelineArg::Sdi => (&analysis.sdi_budget).into(),
    };
    let seed = match &args.seed_file {
        Some(path) => SeedSource::Bytes(fs::read(path).map_err(|e| {
            CliError::env(format!("cannot read seed file {}: {e}", path.display()))
        })?),
        None => SeedSource::Os,
    };
    // respect the state filter in the raw-bit serialization as well
    let filtered: Vec<EventRecord> = match config.state_filter {
        Some(label) => events.iter().filter(|ev| ev.state == label).copied().collect(),
        None => events,
    };
    let (bits, ext_report) = extract_certified(&filtered, &budget, config.eps_hash, &seed)?;
    if let Some(path) = &args.out {
        fs::write(path, bits.to_bytes_msb())
            .map_err(|e| CliError::env(format!("cannot write {}: {e}", path.display())))?;
    }
    eprintln!(
        "{} pipeline: {} input bits, budget {:.1} bits, {} output bits",
        match budget.pipeline {
            Pipeline::DeviceIndependent => "DI",
            Pipeline::SemiDeviceIndependent => "SDI",
        },
        ext_report.n_in,
        ext_report.h_total,
        ext_report.m_out
    );
    emit_report(&ext_report, &args.common.report)
}
