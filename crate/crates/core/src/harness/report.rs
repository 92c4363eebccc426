//! CSV and TOML report output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::{RateInterval, RunStats, TrialStats};

/// Column order of trial reports.
pub const CSV_COLUMNS: [&str; 15] = [
    "trial",
    "scheme",
    "M",
    "rounds",
    "kept_z",
    "kept_x_samples",
    "z_samples",
    "raw_key_len",
    "empirical_rate",
    "predicted_rate",
    "qber_z",
    "qber_x",
    "min_key_fidelity",
    "bit_accuracy",
    "eve_mi",
];

pub const AGGREGATE_LABEL: &str = "aggregate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::ser::Error),
    #[error("bad trial label `{0}`")]
    TrialLabel(String),
}

/// A trial row as written. Empty optional cells mean "not measured".
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    trial: String,
    scheme: u8,
    #[serde(rename = "M")]
    m: usize,
    rounds: u64,
    kept_z: u64,
    kept_x_samples: u64,
    z_samples: u64,
    raw_key_len: u64,
    empirical_rate: f64,
    predicted_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    qber_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    qber_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    min_key_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bit_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    eve_mi: Option<f64>,
}

impl From<&TrialStats> for Row {
    fn from(t: &TrialStats) -> Self {
        Row {
            trial: t.trial.map_or_else(|| AGGREGATE_LABEL.to_string(), |i| i.to_string()),
            scheme: t.scheme,
            m: t.parties,
            rounds: t.rounds,
            kept_z: t.kept_z,
            kept_x_samples: t.kept_x_samples,
            z_samples: t.z_samples,
            raw_key_len: t.raw_key_len,
            empirical_rate: t.empirical_rate,
            predicted_rate: t.predicted_rate,
            qber_z: t.qber_z,
            qber_x: t.qber_x,
            min_key_fidelity: t.min_key_fidelity,
            bit_accuracy: t.bit_accuracy,
            eve_mi: t.eve_mi,
        }
    }
}

impl TryFrom<Row> for TrialStats {
    type Error = ReportError;

    fn try_from(r: Row) -> Result<Self, ReportError> {
        let trial = if r.trial == AGGREGATE_LABEL {
            None
        } else {
            Some(r.trial.parse().map_err(|_| ReportError::TrialLabel(r.trial.clone()))?)
        };
        Ok(TrialStats {
            trial,
            scheme: r.scheme,
            parties: r.m,
            rounds: r.rounds,
            kept_z: r.kept_z,
            kept_x_samples: r.kept_x_samples,
            z_samples: r.z_samples,
            raw_key_len: r.raw_key_len,
            empirical_rate: r.empirical_rate,
            predicted_rate: r.predicted_rate,
            qber_z: r.qber_z,
            qber_x: r.qber_x,
            min_key_fidelity: r.min_key_fidelity,
            bit_accuracy: r.bit_accuracy,
            eve_mi: r.eve_mi,
            aborted: false,
        })
    }
}

/// Rows to write: every trial, plus the aggregate when there is more than one.
fn rows(stats: &RunStats) -> Vec<Row> {
    let mut rows: Vec<Row> = stats.trials.iter().map(Row::from).collect();
    if stats.trials.len() > 1 {
        rows.push(Row::from(&stats.aggregate));
    }
    rows
}

#[derive(Serialize)]
struct TextReport {
    trial: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<RateInterval>,
    aborted_trials: usize,
}

pub fn render_report(stats: &RunStats, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(CSV_COLUMNS)?;
            for row in rows(stats) {
                write_row(&mut w, &row)?;
            }
            finish_csv(w)
        }
        ReportFormat::Text => {
            let report = TextReport {
                trial: rows(stats),
                interval: (stats.trials.len() > 1).then_some(stats.interval),
                aborted_trials: stats.aborted_trials,
            };
            Ok(toml::to_string(&report)?)
        }
    }
}

// Optional cells are written empty; serde's `skip_serializing_if` would drop
// the column instead.
fn write_row(w: &mut csv::Writer<Vec<u8>>, row: &Row) -> Result<(), ReportError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        row.trial.clone(),
        row.scheme.to_string(),
        row.m.to_string(),
        row.rounds.to_string(),
        row.kept_z.to_string(),
        row.kept_x_samples.to_string(),
        row.z_samples.to_string(),
        row.raw_key_len.to_string(),
        row.empirical_rate.to_string(),
        row.predicted_rate.to_string(),
        opt(row.qber_z),
        opt(row.qber_x),
        opt(row.min_key_fidelity),
        opt(row.bit_accuracy),
        opt(row.eve_mi),
    ])?;
    Ok(())
}

/// Serialize `rows` as CSV with a header taken from the field names.
pub fn finish_csv_string<S: Serialize>(rows: &[S]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parse a trial CSV back into rows; the aggregate row has `trial == None`.
pub fn parse_csv(text: &str) -> Result<Vec<TrialStats>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<Row>()
        .map(|row| TrialStats::try_from(row?))
        .collect()
}

/// Write `text` to `path`, or to stdout when `path` is `None`.
pub fn write_output(text: &str, path: Option<&Path>) -> Result<(), ReportError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| ReportError::Write {
            path: p.display().to_string(),
            source,
        }),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| ReportError::Write {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

pub fn emit_report(stats: &RunStats, format: ReportFormat, path: Option<&Path>) -> Result<(), ReportError> {
    write_output(&render_report(stats, format)?, path)
}
