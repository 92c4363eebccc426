//! Monte Carlo trials with reproducible seeding.
//!
//! Trial `i` of a run with master seed `s` uses a ChaCha8 generator seeded
//! with `splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15)`, i.e. the `(i+1)`-th
//! output of a SplitMix64 stream started at `s`. Trials run in parallel and
//! are collected in index order; aggregates only ever see rows sorted by
//! trial index, so they do not depend on the schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ScenarioConfig, Scheme};
use crate::adversary::EveRecord;
use crate::channel::{ClassicalBus, PartyId};
use crate::keyconf::{
    distill_raw_key, predicted_raw_key_rate, run_key_agreement, run_secret_conference, Decision, KeyconfError,
    OtpError, Scheme1Config,
};
use crate::qcrypt::{establish_quantum_key, reuse_check, run_message_round, CheckReport, EstablishParams, QcryptError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario for this command: {0}")]
    Config(String),
    #[error("trial {trial}: {source}")]
    KeyAgreement { trial: usize, source: KeyconfError },
    #[error("trial {trial}: {source}")]
    QuantumKey { trial: usize, source: QcryptError },
    #[error("trial {trial}: {source}")]
    Conference { trial: usize, source: OtpError },
}

/// What a trial does after establishing its key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Scheme 1 key agreement only.
    KeyGen,
    /// Scheme 1 key agreement followed by one-time-pad messages from every conferee.
    Conference,
    /// Scheme 2 key establishment, message rounds and reuse checks.
    QuantumKey,
}

impl RunMode {
    pub fn scheme(self) -> Scheme {
        match self {
            RunMode::KeyGen | RunMode::Conference => Scheme::Sifted,
            RunMode::QuantumKey => Scheme::QuantumKey,
        }
    }
}

/// One row of results. For the aggregate row `trial` is `None`.
///
/// Scheme 2 reuses the scheme 1 columns: `rounds` is N, `kept_z` the usable
/// systems after establishment, `kept_x_samples` the number of parity checks
/// and `qber_x` their failure rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trial: Option<usize>,
    pub scheme: u8,
    #[serde(rename = "M")]
    pub parties: usize,
    pub rounds: u64,
    pub kept_z: u64,
    pub kept_x_samples: u64,
    pub z_samples: u64,
    pub raw_key_len: u64,
    pub empirical_rate: f64,
    pub predicted_rate: f64,
    pub qber_z: Option<f64>,
    pub qber_x: Option<f64>,
    pub min_key_fidelity: Option<f64>,
    pub bit_accuracy: Option<f64>,
    pub eve_mi: Option<f64>,
    /// Not part of the CSV columns.
    #[serde(skip)]
    pub aborted: bool,
}

/// Spread of the aggregate empirical rate around the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInterval {
    /// Binomial standard deviation `sqrt(p (1 - p) / n)` at the predicted `p`.
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    /// `(empirical - predicted) / sigma`; zero when `sigma` is zero and the two agree.
    pub z_score: f64,
    pub within_3sigma: bool,
}

impl RateInterval {
    pub fn new(empirical: f64, predicted: f64, n: u64) -> Self {
        let sigma = if n == 0 {
            0.0
        } else {
            (predicted * (1.0 - predicted) / n as f64).sqrt()
        };
        let diff = empirical - predicted;
        let z_score = if sigma > 0.0 {
            diff / sigma
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            sigma,
            lower: predicted - 3.0 * sigma,
            upper: predicted + 3.0 * sigma,
            z_score,
            within_3sigma: z_score.abs() <= 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub trials: Vec<TrialStats>,
    pub aggregate: TrialStats,
    pub interval: RateInterval,
    pub aborted_trials: usize,
}

impl RunStats {
    pub fn from_trials(mut trials: Vec<TrialStats>) -> Self {
        trials.sort_by_key(|t| t.trial);
        let aggregate = aggregate(&trials);
        let interval = RateInterval::new(aggregate.empirical_rate, aggregate.predicted_rate, aggregate.rounds);
        let aborted_trials = trials.iter().filter(|t| t.aborted).count();
        Self {
            trials,
            aggregate,
            interval,
            aborted_trials,
        }
    }

    pub fn all_aborted(&self) -> bool {
        !self.trials.is_empty() && self.aborted_trials == self.trials.len()
    }
}

/// Combine per-trial rows.
///
/// Counts are summed, the empirical rate is `sum kept_z / sum rounds`, error
/// rates are weighted by their sample counts, the minimum fidelity is the
/// minimum and the remaining rates are plain means. Rows are sorted by trial
/// index first, so any permutation of the input gives the same result.
pub fn aggregate(rows: &[TrialStats]) -> TrialStats {
    let mut rows: Vec<&TrialStats> = rows.iter().collect();
    rows.sort_by_key(|t| t.trial);
    let first = rows.first();
    let sum = |f: fn(&TrialStats) -> u64| rows.iter().map(|t| f(t)).sum::<u64>();
    let rounds = sum(|t| t.rounds);
    let kept_z = sum(|t| t.kept_z);
    let weighted = |q: fn(&TrialStats) -> Option<f64>, n: fn(&TrialStats) -> u64| {
        let mut num = 0.0;
        let mut den = 0u64;
        for t in &rows {
            if let Some(v) = q(t) {
                num += v * n(t) as f64;
                den += n(t);
            }
        }
        (den > 0).then(|| num / den as f64)
    };
    let mean = |f: fn(&TrialStats) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(|t| f(t)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    TrialStats {
        trial: None,
        scheme: first.map_or(0, |t| t.scheme),
        parties: first.map_or(0, |t| t.parties),
        rounds,
        kept_z,
        kept_x_samples: sum(|t| t.kept_x_samples),
        z_samples: sum(|t| t.z_samples),
        raw_key_len: sum(|t| t.raw_key_len),
        empirical_rate: if rounds == 0 { 0.0 } else { kept_z as f64 / rounds as f64 },
        predicted_rate: mean(|t| Some(t.predicted_rate)).unwrap_or(0.0),
        qber_z: weighted(|t| t.qber_z, |t| t.z_samples),
        qber_x: weighted(|t| t.qber_x, |t| t.kept_x_samples),
        min_key_fidelity: rows.iter().filter_map(|t| t.min_key_fidelity).reduce(f64::min),
        bit_accuracy: mean(|t| t.bit_accuracy),
        eve_mi: mean(|t| t.eve_mi),
        aborted: !rows.is_empty() && rows.iter().all(|t| t.aborted),
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    splitmix64(master.wrapping_add((index as u64).wrapping_mul(GOLDEN_GAMMA)))
}

/// Run every trial of `config` in `mode`.
pub fn run_trials(config: &ScenarioConfig, mode: RunMode) -> Result<RunStats, RunError> {
    config.validate().map_err(|e| RunError::Config(e.to_string()))?;
    if config.scheme != mode.scheme() {
        return Err(RunError::Config(format!(
            "scheme {} scenario cannot run in {mode:?} mode",
            config.scheme.number()
        )));
    }
    let rows = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, mode, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunStats::from_trials(rows))
}

/// One trial on its own generator.
pub fn run_trial(config: &ScenarioConfig, mode: RunMode, index: usize) -> Result<TrialStats, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, index));
    match mode {
        RunMode::KeyGen => sifted_trial(config, index, false, &mut rng),
        RunMode::Conference => sifted_trial(config, index, true, &mut rng),
        RunMode::QuantumKey => quantum_key_trial(config, index, &mut rng),
    }
}

/// Raw-key probability of a scheme 1 scenario from its star links and detectors.
pub fn predicted_sifted_rate(config: &ScenarioConfig) -> Result<f64, KeyconfError> {
    let links: Vec<f64> = (1..config.parties)
        .map(|l| config.network.link(PartyId(0), PartyId(l)).map_or(1.0, |k| k.p_t))
        .collect();
    let detectors: Vec<f64> = (0..config.parties)
        .map(|l| config.network.detector(PartyId(l)).map_or(1.0, |d| d.p_d))
        .collect();
    predicted_raw_key_rate(config.sample_ratio, config.parties, &links, &detectors)
}

fn sifted_trial(
    config: &ScenarioConfig,
    index: usize,
    conference: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TrialStats, RunError> {
    let err = |source| RunError::KeyAgreement { trial: index, source };
    let mut cfg = Scheme1Config::new(config.parties, config.rounds, config.sample_ratio).map_err(err)?;
    cfg.abort_threshold_z = config.thresholds.z;
    cfg.abort_threshold_x = config.thresholds.x;
    let predicted_rate = predicted_sifted_rate(config).map_err(err)?;

    let mut bus = ClassicalBus::muted();
    let mut eve = EveRecord::new();
    let run = run_key_agreement::<f64, _>(&cfg, &config.network, &config.attacks, rng, &mut bus, &mut eve)
        .map_err(err)?;
    let accepted = run.decision == Decision::Accept;
    let keys = if accepted { distill_raw_key(&run.sifted) } else { Vec::new() };
    let raw_key_len = keys.first().map_or(0, Vec::len);

    let bit_accuracy = if conference && accepted {
        let share = config.message_bits.min(raw_key_len / config.parties);
        if share == 0 {
            None
        } else {
            let messages: Vec<(PartyId, Vec<u8>)> = (0..config.parties)
                .map(|p| (PartyId(p), (0..share).map(|_| rng.random_range(0..2u8)).collect()))
                .collect();
            let outcome = run_secret_conference(&keys, &messages, &mut bus)
                .map_err(|source| RunError::Conference { trial: index, source })?;
            let mut total = 0usize;
            let mut correct = 0usize;
            for rec in &outcome.recoveries {
                let sent = &messages[rec.sender.0].1;
                total += sent.len();
                correct += rec.bits.iter().zip(sent).filter(|(a, b)| a == b).count();
            }
            (total > 0).then(|| correct as f64 / total as f64)
        }
    } else {
        None
    };

    Ok(TrialStats {
        trial: Some(index),
        scheme: 1,
        parties: config.parties,
        rounds: config.rounds,
        kept_z: run.kept_z as u64,
        kept_x_samples: run.report.x_samples as u64,
        z_samples: run.report.z_samples as u64,
        raw_key_len: raw_key_len as u64,
        empirical_rate: run.raw_key_fraction(),
        predicted_rate,
        qber_z: run.report.qber_z,
        qber_x: run.report.qber_x,
        min_key_fidelity: None,
        bit_accuracy,
        eve_mi: eve_mi(&eve),
        aborted: !accepted,
    })
}

fn eve_mi(eve: &EveRecord) -> Option<f64> {
    (!eve.scored_pairs().is_empty()).then(|| eve.mutual_information())
}

/// Usable-key probability of a scheme 2 scenario: every star link delivers
/// and the system is not drawn for a check.
pub fn predicted_quantum_key_rate(config: &ScenarioConfig) -> f64 {
    let delivery: f64 = (1..config.parties)
        .map(|l| config.network.link(PartyId(0), PartyId(l)).map_or(1.0, |k| k.p_t))
        .product();
    (1.0 - config.check_fraction) * delivery
}

fn quantum_key_trial(config: &ScenarioConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<TrialStats, RunError> {
    let err = |source| RunError::QuantumKey { trial: index, source };
    let mut params = EstablishParams::new(config.parties, config.rounds as usize, config.check_fraction);
    params.parity_threshold = config.thresholds.parity;
    let mut bus = ClassicalBus::muted();
    let mut eve = EveRecord::new();
    let mut row = TrialStats {
        trial: Some(index),
        scheme: 2,
        parties: config.parties,
        rounds: config.rounds,
        kept_z: 0,
        kept_x_samples: 0,
        z_samples: 0,
        raw_key_len: 0,
        empirical_rate: 0.0,
        predicted_rate: predicted_quantum_key_rate(config),
        qber_z: None,
        qber_x: None,
        min_key_fidelity: None,
        bit_accuracy: None,
        eve_mi: None,
        aborted: false,
    };
    let finish_checks = |row: &mut TrialStats, checks: &CheckReport| {
        row.kept_x_samples = checks.checked() as u64;
        row.qber_x = checks.error_rate();
    };

    let (mut key, mut checks) =
        match establish_quantum_key::<f64, _>(&params, &config.network, &config.attacks, rng, &mut bus, &mut eve) {
            Ok(v) => v,
            Err(QcryptError::Abort { report, .. }) => {
                finish_checks(&mut row, &report);
                row.aborted = true;
                return Ok(row);
            }
            Err(e) => return Err(err(e)),
        };
    row.kept_z = key.usable_len() as u64;
    row.empirical_rate = row.kept_z as f64 / config.rounds as f64;

    let mut min_fidelity: Option<f64> = None;
    let mut total = 0usize;
    let mut correct = 0usize;
    for _ in 0..config.message_rounds {
        let len = config.message_bits.min(key.usable_len());
        if len == 0 {
            break;
        }
        let message: Vec<u8> = (0..len).map(|_| rng.random_range(0..2u8)).collect();
        let report = run_message_round(
            &mut key,
            PartyId(0),
            &message,
            &config.network,
            &config.attacks,
            rng,
            &mut bus,
            &mut eve,
        )
        .map_err(err)?;
        for (_, bits) in &report.received {
            total += bits.len();
            correct += bits.iter().zip(&message).filter(|(a, b)| a == b).count();
        }
        for &j in &report.systems_used {
            let f = key.fidelity_with_ghz(j).map_err(err)?;
            min_fidelity = Some(min_fidelity.map_or(f, |m| m.min(f)));
        }
        if key.usable_len() == 0 {
            break;
        }
        match reuse_check(&mut key, config.reuse_fraction, config.thresholds.parity, rng, &mut bus) {
            Ok(r) => checks.merge(r),
            Err(QcryptError::Abort { report, .. }) => {
                checks.merge(*report);
                row.aborted = true;
                break;
            }
            Err(e) => return Err(err(e)),
        }
    }
    finish_checks(&mut row, &checks);
    row.raw_key_len = key.usable_len() as u64;
    row.min_key_fidelity = min_fidelity;
    row.bit_accuracy = (total > 0).then(|| correct as f64 / total as f64);
    row.eve_mi = eve_mi(&eve);
    Ok(row)
}
