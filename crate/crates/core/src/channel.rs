//! Simulated quantum links, detectors and the public classical bus.
//!
//! A link loses its qubit with probability `1 − p_t`. A surviving qubit is
//! first handed to the adversary strategy attached to that link (if any) and
//! then hit by a uniformly chosen Pauli with probability `q_depol`. Noise is
//! applied as a random Pauli inside the joint pure state, so the engine never
//! leaves state-vector form.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AttackStrategy, EveObservation};
use crate::qcore::{Basis, Outcome, Pauli, QcoreError, Real, StateVector};

/// Conferee index; 0 is the conferee who prepares the GHZ states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub usize);

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("link {from}->{to}: {field} = {value} is outside [0, 1]")]
    LinkProbability {
        from: PartyId,
        to: PartyId,
        field: &'static str,
        value: f64,
    },
    #[error("detector of party {party}: p_d = {value} is outside [0, 1]")]
    DetectorProbability { party: PartyId, value: f64 },
    #[error("no link configured from {0} to {1}")]
    MissingLink(PartyId, PartyId),
    #[error("no detector configured for party {0}")]
    MissingDetector(PartyId),
    #[error(transparent)]
    State(#[from] QcoreError),
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub from: PartyId,
    pub to: PartyId,
    pub p_t: f64,
    pub q_depol: f64,
}

impl LinkConfig {
    pub fn new(from: PartyId, to: PartyId, p_t: f64, q_depol: f64) -> Result<Self, ChannelError> {
        let link = Self { from, to, p_t, q_depol };
        link.validate()?;
        Ok(link)
    }

    pub fn ideal(from: PartyId, to: PartyId) -> Self {
        Self {
            from,
            to,
            p_t: 1.0,
            q_depol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [("p_t", self.p_t), ("q_depol", self.q_depol)] {
            if !unit_interval(value) {
                return Err(ChannelError::LinkProbability {
                    from: self.from,
                    to: self.to,
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub party: PartyId,
    pub p_d: f64,
}

impl DetectorConfig {
    pub fn new(party: PartyId, p_d: f64) -> Result<Self, ChannelError> {
        if !unit_interval(p_d) {
            return Err(ChannelError::DetectorProbability { party, value: p_d });
        }
        Ok(Self { party, p_d })
    }

    pub fn ideal(party: PartyId) -> Self {
        Self { party, p_d: 1.0 }
    }
}

/// Links and detectors of one experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    pub links: Vec<LinkConfig>,
    pub detectors: Vec<DetectorConfig>,
}

impl Network {
    /// Preparer (party 0) linked directly to every other party.
    pub fn ideal_star(parties: usize) -> Self {
        Self {
            links: (1..parties).map(|l| LinkConfig::ideal(PartyId(0), PartyId(l))).collect(),
            detectors: (0..parties).map(|l| DetectorConfig::ideal(PartyId(l))).collect(),
        }
    }

    /// Ring of links `l → l+1 (mod M)`, enough for a chain from any sender.
    pub fn ideal_ring(parties: usize) -> Self {
        Self {
            links: (0..parties)
                .map(|l| LinkConfig::ideal(PartyId(l), PartyId((l + 1) % parties)))
                .collect(),
            detectors: (0..parties).map(|l| DetectorConfig::ideal(PartyId(l))).collect(),
        }
    }

    pub fn link(&self, from: PartyId, to: PartyId) -> Result<&LinkConfig, ChannelError> {
        self.links
            .iter()
            .find(|l| l.from == from && l.to == to)
            .ok_or(ChannelError::MissingLink(from, to))
    }

    pub fn link_mut(&mut self, from: PartyId, to: PartyId) -> Result<&mut LinkConfig, ChannelError> {
        self.links
            .iter_mut()
            .find(|l| l.from == from && l.to == to)
            .ok_or(ChannelError::MissingLink(from, to))
    }

    pub fn detector(&self, party: PartyId) -> Result<&DetectorConfig, ChannelError> {
        self.detectors
            .iter()
            .find(|d| d.party == party)
            .ok_or(ChannelError::MissingDetector(party))
    }
}

/// Result of sending one qubit over a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered {
        /// What the adversary on this link observed, if she acted.
        eve: Option<EveObservation>,
        /// Pauli applied by the depolarizing channel, if any.
        noise: Option<Pauli>,
    },
    Lost,
}

impl Delivery {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Delivery::Delivered { .. })
    }
}

/// Send the qubit `label` of `state` over `link`.
///
/// Random draws happen in a fixed order: loss, then the attack, then noise.
/// A lost qubit is left in the register untouched; callers decide how to
/// dispose of it.
pub fn transmit_qubit<T: Real, R: Rng + ?Sized>(
    state: &mut StateVector<T>,
    label: &str,
    link: &LinkConfig,
    attack: &AttackStrategy,
    rng: &mut R,
) -> Result<Delivery, ChannelError> {
    state.position(label)?;
    if !rng.random_bool(link.p_t) {
        return Ok(Delivery::Lost);
    }
    let eve = attack.intercept(state, label, rng)?;
    let noise = if link.q_depol > 0.0 && rng.random_bool(link.q_depol) {
        let p = Pauli::ALL[rng.random_range(0..3)];
        state.apply_pauli(label, p)?;
        Some(p)
    } else {
        None
    };
    Ok(Delivery::Delivered { eve, noise })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    Fired,
    Silent,
}

pub fn detect<R: Rng + ?Sized>(detector: &DetectorConfig, rng: &mut R) -> Detection {
    if rng.random_bool(detector.p_d) {
        Detection::Fired
    } else {
        Detection::Silent
    }
}

/// Public announcement payloads.
#[derive(Debug, Clone, PartialEq)]
pub enum Announcement {
    /// Per-party measuring bases of one round; `None` for a party whose
    /// particle was lost or whose detector stayed silent.
    Bases(Vec<Option<Basis>>),
    /// Outcomes revealed for a sample round.
    Outcomes(Vec<Outcome>),
    /// Round discarded because a particle was lost or not detected.
    Discard,
    /// Rounds (or key systems) selected as samples.
    SampleSelection(Vec<u64>),
    /// A key system is excluded from further use.
    FlagSystem(usize),
    /// A message bit is being re-sent on another key system.
    Retransmit { bit_index: usize, system: usize },
    /// One-time-pad ciphertext.
    Ciphertext(Vec<u8>),
    /// Verdict on the sampled error rates.
    Verdict { accepted: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusEntry {
    pub sender: PartyId,
    pub round: u64,
    pub payload: Announcement,
}

/// Ideal authenticated broadcast channel: append-only, one global order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassicalBus {
    log: Vec<BusEntry>,
    muted: bool,
}

impl ClassicalBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// A bus that counts nothing and stores nothing; for bulk Monte Carlo
    /// runs where the transcript is not inspected.
    pub fn muted() -> Self {
        Self {
            log: Vec::new(),
            muted: true,
        }
    }

    pub fn broadcast(&mut self, sender: PartyId, round: u64, payload: Announcement) {
        if !self.muted {
            self.log.push(BusEntry { sender, round, payload });
        }
    }

    /// The log as every party sees it.
    pub fn entries(&self) -> &[BusEntry] {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }
}
