//! Scenario files, Monte Carlo trials, reports and the exhaustive oracle.

pub mod config;
pub mod oracle;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{load_scenario, load_scenario_with, parse_scenario, ConfigError, Overrides, ScenarioConfig, Scheme};
pub use oracle::{oracle_tables, OracleReport, ORACLE_TOLERANCE};
pub use report::{emit_report, parse_csv, render_report, ReportFormat};
pub use run::{aggregate, run_trials, trial_seed, RunMode, RunStats, TrialStats};
pub use sweep::{render_sweep, run_sweep, SweepCell};
