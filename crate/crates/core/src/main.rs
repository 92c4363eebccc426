use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ghzconf::harness::oracle::{oracle_tables, OracleError, MAX_ORACLE_PARTIES};
use ghzconf::harness::report::{finish_csv_string, write_output, ReportError};
use ghzconf::harness::run::RunError;
use ghzconf::harness::{
    load_scenario_with, render_report, render_sweep, run_sweep, run_trials, ConfigError, Overrides, ReportFormat,
    RunMode,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_ABORTED: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "ghzconf", version, about = "GHZ conference keying and quantum-key encryption simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; overrides `seed` in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Number of trials; overrides `trials` in the scenario file.
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scheme 1 key agreement.
    Keygen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scheme 1 key agreement followed by one-time-pad messages.
    Conference {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scheme 2 quantum-key establishment, messaging and reuse checks.
    Qkey {
        #[arg(long)]
        config: PathBuf,
    },
    /// Predicted versus empirical raw-key rate over the scenario's grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exhaustive engine-versus-Born-rule comparison.
    Oracle {
        /// Largest conferee count to enumerate.
        #[arg(long, default_value_t = MAX_ORACLE_PARTIES)]
        max_parties: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = if matches!(e, RunError::Config(_)) { EXIT_CONFIG } else { EXIT_INVARIANT };
        Failure::new(code, e)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        let code = if matches!(e, ReportError::Write { .. }) { EXIT_CONFIG } else { EXIT_INVARIANT };
        Failure::new(code, e)
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = if matches!(e, OracleError::PartyCount(_)) { EXIT_CONFIG } else { EXIT_INVARIANT };
        Failure::new(code, e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let overrides = Overrides {
        seed: cli.seed,
        trials: cli.trials,
    };
    let format = ReportFormat::from(cli.format);
    let out = cli.out.as_deref();
    let mode = match &cli.command {
        Command::Keygen { config } => Some((config, RunMode::KeyGen)),
        Command::Conference { config } => Some((config, RunMode::Conference)),
        Command::Qkey { config } => Some((config, RunMode::QuantumKey)),
        _ => None,
    };
    if let Some((path, mode)) = mode {
        let scenario = load_scenario_with(path, overrides)?;
        let stats = run_trials(&scenario, mode)?;
        write_output(&render_report(&stats, format)?, out)?;
        if stats.all_aborted() {
            return Err(Failure::new(
                EXIT_ALL_ABORTED,
                format!("all {} trials aborted on their error thresholds", stats.trials.len()),
            ));
        }
        return Ok(());
    }
    match &cli.command {
        Command::Sweep { config } => {
            let scenario = load_scenario_with(config, overrides)?;
            let cells = run_sweep(&scenario)?;
            write_output(&render_sweep(&cells, format)?, out)?;
            let outside = cells.iter().filter(|c| !c.within_3sigma).count();
            if outside > 0 {
                eprintln!("note: {outside} of {} cells outside 3 sigma", cells.len());
            }
            Ok(())
        }
        Command::Oracle { max_parties } => {
            let report = oracle_tables(*max_parties)?;
            let text = match format {
                ReportFormat::Csv => finish_csv_string(&report.sections)?,
                ReportFormat::Text => toml::to_string(&report).map_err(ReportError::from)?,
            };
            write_output(&text, out)?;
            if !report.passed() {
                return Err(Failure::new(
                    EXIT_INVARIANT,
                    format!("oracle max deviation {:e} exceeds tolerance", report.max_deviation()),
                ));
            }
            Ok(())
        }
        _ => unreachable!("run modes handled above"),
    }
}
