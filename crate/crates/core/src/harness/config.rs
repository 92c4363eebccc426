//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected so a misspelled
//! probability name fails loudly instead of silently taking its default.
//!
//! ```toml
//! scheme = 1              # 1: sifted GHZ keying, 2: stored quantum key
//! parties = 3             # M >= 3
//! rounds = 100000         # scheme 1: rounds; scheme 2: key systems N
//! sample_ratio = 0.054    # scheme 1 only, in [0, 2]
//! # check_fraction = 0.1  # scheme 2 only, in [0, 1)
//! # reuse_fraction = 0.1  # scheme 2 only, in (0, 1], default 0.1
//! # message_rounds = 1    # scheme 2 only, default 1
//! message_bits = 64       # bits per message, default 64
//! trials = 10             # default 1
//! seed = 42               # mandatory (or --seed on the command line)
//!
//! [thresholds]            # all default to 0.02
//! z = 0.02
//! x = 0.02
//! parity = 0.02
//!
//! [[links]]               # unlisted topology links are lossless and noiseless
//! from = 0
//! to = 1
//! p_t = 0.9
//! q_depol = 0.0
//!
//! [[detectors]]           # scheme 1 only; unlisted detectors are perfect
//! party = 1
//! p_d = 0.8
//!
//! [[attacks]]
//! from = 0
//! to = 1
//! strategy = "intercept-resend-z"
//!
//! [sweep]                 # used by the `sweep` subcommand only
//! parties = [3, 4, 5]
//! sample_ratio = [0.054, 0.25, 0.5]
//! p_t = [1.0, 0.9]
//! p_d = [1.0, 0.8]
//! ```
//!
//! Scheme 1 uses the star topology `0 -> l`. Scheme 2 uses the star for key
//! distribution and the ring `l -> l+1 (mod M)` for traveling qubits.
//! Attack strategies: `intercept-resend-z`, `intercept-resend-x`,
//! `intercept-resend-y`, `intercept-resend-random-zx`, `traveling-measure-z`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::adversary::{AttackKind, AttackPlan, EveBasis, TargetedAttack};
use crate::channel::{DetectorConfig, LinkConfig, Network, PartyId};
use crate::keyconf::DEFAULT_ABORT_THRESHOLD;
use crate::qcore::MAX_PARTIES;
use crate::qcrypt::DEFAULT_PARITY_THRESHOLD;

pub const DEFAULT_REUSE_FRACTION: f64 = 0.1;
pub const DEFAULT_MESSAGE_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<FieldError>),
}

fn list(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    /// Field paths named by a validation error.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            ConfigError::Invalid(errs) => errs.iter().map(|e| e.path.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Per-round GHZ distribution, sifting and sampling.
    Sifted,
    /// Stored GHZ key encrypting traveling qubits.
    QuantumKey,
}

impl Scheme {
    pub fn number(self) -> u8 {
        match self {
            Scheme::Sifted => 1,
            Scheme::QuantumKey => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub z: f64,
    pub x: f64,
    pub parity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z: DEFAULT_ABORT_THRESHOLD,
            x: DEFAULT_ABORT_THRESHOLD,
            parity: DEFAULT_PARITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub parties: Vec<usize>,
    pub sample_ratio: Vec<f64>,
    pub p_t: Vec<f64>,
    pub p_d: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            parties: vec![3, 4, 5],
            sample_ratio: vec![0.054, 0.25, 0.5],
            p_t: vec![1.0, 0.9],
            p_d: vec![1.0, 0.8],
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub parties: usize,
    /// Scheme 1: distribution rounds. Scheme 2: key systems N.
    pub rounds: u64,
    pub sample_ratio: f64,
    pub check_fraction: f64,
    pub reuse_fraction: f64,
    pub message_rounds: usize,
    pub message_bits: usize,
    pub trials: usize,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub network: Network,
    pub attacks: AttackPlan,
    pub sweep: SweepGrid,
}

impl ScenarioConfig {
    /// Scheme 1 over an ideal star.
    pub fn sifted(parties: usize, rounds: u64, sample_ratio: f64, seed: u64) -> Self {
        Self {
            scheme: Scheme::Sifted,
            parties,
            rounds,
            sample_ratio,
            check_fraction: 0.0,
            reuse_fraction: DEFAULT_REUSE_FRACTION,
            message_rounds: 1,
            message_bits: DEFAULT_MESSAGE_BITS,
            trials: 1,
            seed,
            thresholds: Thresholds::default(),
            network: topology(Scheme::Sifted, parties),
            attacks: AttackPlan::honest(),
            sweep: SweepGrid::default(),
        }
    }

    /// Scheme 2 over ideal star and ring links.
    pub fn quantum_key(parties: usize, systems: u64, check_fraction: f64, seed: u64) -> Self {
        Self {
            scheme: Scheme::QuantumKey,
            check_fraction,
            sample_ratio: 0.0,
            network: topology(Scheme::QuantumKey, parties),
            ..Self::sifted(parties, systems, 0.0, seed)
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    /// Re-check every invariant, e.g. after editing fields in code.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Errors::default();
        if self.parties < 3 || self.parties > MAX_PARTIES {
            errs.push("parties", format!("must be in 3..={MAX_PARTIES}, got {}", self.parties));
        }
        if self.rounds == 0 {
            errs.push("rounds", "must be at least 1");
        }
        if self.trials == 0 {
            errs.push("trials", "must be at least 1");
        }
        match self.scheme {
            Scheme::Sifted => errs.range("sample_ratio", self.sample_ratio, 0.0, 2.0),
            Scheme::QuantumKey => {
                if !(0.0..1.0).contains(&self.check_fraction) {
                    errs.push("check_fraction", format!("must be in [0, 1), got {}", self.check_fraction));
                }
                if !(self.reuse_fraction > 0.0 && self.reuse_fraction <= 1.0) {
                    errs.push("reuse_fraction", format!("must be in (0, 1], got {}", self.reuse_fraction));
                }
            }
        }
        errs.range("thresholds.z", self.thresholds.z, 0.0, 1.0);
        errs.range("thresholds.x", self.thresholds.x, 0.0, 1.0);
        errs.range("thresholds.parity", self.thresholds.parity, 0.0, 1.0);
        for (i, l) in self.network.links.iter().enumerate() {
            errs.range(&format!("links[{i}].p_t"), l.p_t, 0.0, 1.0);
            errs.range(&format!("links[{i}].q_depol"), l.q_depol, 0.0, 1.0);
        }
        for (i, d) in self.network.detectors.iter().enumerate() {
            errs.range(&format!("detectors[{i}].p_d"), d.p_d, 0.0, 1.0);
        }
        errs.finish()
    }
}

/// Links and detectors a scheme uses, all ideal.
pub fn topology(scheme: Scheme, parties: usize) -> Network {
    match scheme {
        Scheme::Sifted => Network::ideal_star(parties),
        Scheme::QuantumKey => {
            let mut net = Network::ideal_star(parties);
            for link in Network::ideal_ring(parties).links {
                if net.link(link.from, link.to).is_err() {
                    net.links.push(link);
                }
            }
            net
        }
    }
}

#[derive(Debug, Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn range(&mut self, path: &str, value: f64, lo: f64, hi: f64) {
        if !(lo..=hi).contains(&value) {
            self.push(path, format!("must be in [{lo}, {hi}], got {value}"));
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(self.0))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scheme: u8,
    parties: usize,
    rounds: u64,
    sample_ratio: Option<f64>,
    check_fraction: Option<f64>,
    reuse_fraction: Option<f64>,
    message_rounds: Option<usize>,
    message_bits: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    detectors: Vec<RawDetector>,
    #[serde(default)]
    attacks: Vec<RawAttack>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    z: Option<f64>,
    x: Option<f64>,
    parity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: usize,
    to: usize,
    #[serde(default = "one")]
    p_t: f64,
    #[serde(default)]
    q_depol: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    party: usize,
    p_d: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    from: usize,
    to: usize,
    strategy: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parties: Option<Vec<usize>>,
    sample_ratio: Option<Vec<f64>>,
    p_t: Option<Vec<f64>>,
    p_d: Option<Vec<f64>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

pub fn parse_strategy(name: &str) -> Option<AttackKind> {
    Some(match name {
        "none" => AttackKind::None,
        "intercept-resend-z" => AttackKind::InterceptResend(EveBasis::Z),
        "intercept-resend-x" => AttackKind::InterceptResend(EveBasis::X),
        "intercept-resend-y" => AttackKind::InterceptResend(EveBasis::Y),
        "intercept-resend-random-zx" => AttackKind::InterceptResend(EveBasis::RandomZX),
        "traveling-measure-z" => AttackKind::TravelingMeasureZ,
        _ => return None,
    })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    load_scenario_with(path, Overrides::default())
}

pub fn load_scenario_with(path: &Path, overrides: Overrides) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: Overrides) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut errs = Errors::default();

    let scheme = match raw.scheme {
        1 => Scheme::Sifted,
        2 => Scheme::QuantumKey,
        s => {
            errs.push("scheme", format!("must be 1 or 2, got {s}"));
            Scheme::Sifted
        }
    };
    let parties = raw.parties;
    let party_ok = (3..=MAX_PARTIES).contains(&parties);

    match scheme {
        Scheme::Sifted => {
            if raw.sample_ratio.is_none() {
                errs.push("sample_ratio", "required for scheme 1");
            }
            for (key, present) in [
                ("check_fraction", raw.check_fraction.is_some()),
                ("reuse_fraction", raw.reuse_fraction.is_some()),
                ("message_rounds", raw.message_rounds.is_some()),
                ("thresholds.parity", raw.thresholds.parity.is_some()),
            ] {
                if present {
                    errs.push(key, "only applies to scheme 2");
                }
            }
        }
        Scheme::QuantumKey => {
            if raw.check_fraction.is_none() {
                errs.push("check_fraction", "required for scheme 2");
            }
            for (key, present) in [
                ("sample_ratio", raw.sample_ratio.is_some()),
                ("thresholds.z", raw.thresholds.z.is_some()),
                ("thresholds.x", raw.thresholds.x.is_some()),
                ("detectors", !raw.detectors.is_empty()),
            ] {
                if present {
                    errs.push(key, "only applies to scheme 1");
                }
            }
        }
    }
    let seed = overrides.seed.or(raw.seed);
    if seed.is_none() {
        errs.push("seed", "missing; a master seed is mandatory (set `seed` or pass --seed)");
    }
    if raw.message_rounds == Some(0) {
        errs.push("message_rounds", "must be at least 1");
    }
    if raw.message_bits == Some(0) {
        errs.push("message_bits", "must be at least 1");
    }

    let mut network = topology(scheme, parties.clamp(2, MAX_PARTIES));
    let mut seen_links = Vec::new();
    for (i, l) in raw.links.iter().enumerate() {
        let path = format!("links[{i}]");
        if seen_links.contains(&(l.from, l.to)) {
            errs.push(&path, format!("duplicate link {} -> {}", l.from, l.to));
            continue;
        }
        seen_links.push((l.from, l.to));
        errs.range(&format!("{path}.p_t"), l.p_t, 0.0, 1.0);
        errs.range(&format!("{path}.q_depol"), l.q_depol, 0.0, 1.0);
        if !party_ok {
            continue;
        }
        match network.link_mut(PartyId(l.from), PartyId(l.to)) {
            Ok(slot) => *slot = LinkConfig { p_t: l.p_t, q_depol: l.q_depol, ..*slot },
            Err(_) => errs.push(&path, format!("{} -> {} is not a link of scheme {}", l.from, l.to, raw.scheme)),
        }
    }
    let mut seen_detectors = Vec::new();
    for (i, d) in raw.detectors.iter().enumerate() {
        let path = format!("detectors[{i}]");
        if seen_detectors.contains(&d.party) {
            errs.push(&path, format!("duplicate detector for party {}", d.party));
            continue;
        }
        seen_detectors.push(d.party);
        errs.range(&format!("{path}.p_d"), d.p_d, 0.0, 1.0);
        if !party_ok {
            continue;
        }
        match network.detectors.iter_mut().find(|det| det.party == PartyId(d.party)) {
            Some(slot) => *slot = DetectorConfig { p_d: d.p_d, ..*slot },
            None => errs.push(&format!("{path}.party"), format!("no party {}", d.party)),
        }
    }
    let mut targeted = Vec::new();
    for (i, a) in raw.attacks.iter().enumerate() {
        let path = format!("attacks[{i}]");
        let Some(kind) = parse_strategy(&a.strategy) else {
            errs.push(&format!("{path}.strategy"), format!("unknown strategy `{}`", a.strategy));
            continue;
        };
        if scheme == Scheme::Sifted && kind == AttackKind::TravelingMeasureZ {
            errs.push(&format!("{path}.strategy"), "scheme 1 has no traveling qubit");
        }
        if party_ok && network.link(PartyId(a.from), PartyId(a.to)).is_err() {
            errs.push(&path, format!("{} -> {} is not a link of scheme {}", a.from, a.to, raw.scheme));
        }
        if targeted.iter().any(|t: &TargetedAttack| t.from.0 == a.from && t.to.0 == a.to) {
            errs.push(&path, format!("second attack on link {} -> {}", a.from, a.to));
            continue;
        }
        targeted.push(TargetedAttack {
            from: PartyId(a.from),
            to: PartyId(a.to),
            kind,
        });
    }
    let attacks = AttackPlan::new(targeted).unwrap_or_else(|_| AttackPlan::honest());

    let mut sweep = SweepGrid::default();
    if let Some(s) = raw.sweep {
        if scheme != Scheme::Sifted {
            errs.push("sweep", "sweeps apply to scheme 1 only");
        }
        if let Some(v) = s.parties {
            for (i, &m) in v.iter().enumerate() {
                if !(3..=MAX_PARTIES).contains(&m) {
                    errs.push(&format!("sweep.parties[{i}]"), format!("must be in 3..={MAX_PARTIES}, got {m}"));
                }
            }
            sweep.parties = v;
        }
        for (name, values, hi, slot) in [
            ("sample_ratio", s.sample_ratio, 2.0, &mut sweep.sample_ratio),
            ("p_t", s.p_t, 1.0, &mut sweep.p_t),
            ("p_d", s.p_d, 1.0, &mut sweep.p_d),
        ] {
            if let Some(v) = values {
                for (i, &x) in v.iter().enumerate() {
                    errs.range(&format!("sweep.{name}[{i}]"), x, 0.0, hi);
                }
                *slot = v;
            }
        }
        for (name, empty) in [
            ("sweep.parties", sweep.parties.is_empty()),
            ("sweep.sample_ratio", sweep.sample_ratio.is_empty()),
            ("sweep.p_t", sweep.p_t.is_empty()),
            ("sweep.p_d", sweep.p_d.is_empty()),
        ] {
            if empty {
                errs.push(name, "must not be empty");
            }
        }
    }

    let defaults = Thresholds::default();
    let config = ScenarioConfig {
        scheme,
        parties,
        rounds: raw.rounds,
        sample_ratio: raw.sample_ratio.unwrap_or(0.0),
        check_fraction: raw.check_fraction.unwrap_or(0.0),
        reuse_fraction: raw.reuse_fraction.unwrap_or(DEFAULT_REUSE_FRACTION),
        message_rounds: raw.message_rounds.unwrap_or(1),
        message_bits: raw.message_bits.unwrap_or(DEFAULT_MESSAGE_BITS),
        trials: overrides.trials.or(raw.trials).unwrap_or(1),
        seed: seed.unwrap_or(0),
        thresholds: Thresholds {
            z: raw.thresholds.z.unwrap_or(defaults.z),
            x: raw.thresholds.x.unwrap_or(defaults.x),
            parity: raw.thresholds.parity.unwrap_or(defaults.parity),
        },
        network,
        attacks,
        sweep,
    };
    if let Err(ConfigError::Invalid(more)) = config.validate() {
        // Link and detector ranges were already reported with their file index.
        for e in more {
            let dup = e.path.starts_with("links[") || e.path.starts_with("detectors[");
            if !dup && !errs.0.contains(&e) {
                errs.0.push(e);
            }
        }
    }
    errs.finish()?;
    Ok(config)
}
