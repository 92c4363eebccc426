//! Common-key conferencing.
//!
//! Conferee 0 prepares GHZ states and sends one particle to each other
//! conferee. Every conferee measures in Z with probability `1 − p` and in X
//! with probability `p`, where `p^M = r/2` for sample ratio `r`. Rounds in
//! which everyone chose Z give identical bits; rounds in which everyone chose
//! X give outcomes whose eigenvalue product is +1. All X rounds, plus an
//! equally sized random subset of Z rounds, are revealed to estimate errors;
//! the remaining Z rounds form the shared key, which then drives a plain
//! one-time pad among the conferees.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::adversary::{AttackPlan, EveEvent, EveRecord};
use crate::channel::{detect, transmit_qubit, Announcement, ChannelError, ClassicalBus, Delivery, Detection, Network, PartyId};
use crate::qcore::{party_label, Basis, Outcome, QcoreError, Real, StateVector, MAX_PARTIES};

pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeyconfError {
    #[error("sample ratio {0} is outside [0, 2]")]
    SampleRatio(f64),
    #[error("party count {0} is outside 1..={MAX_PARTIES}")]
    PartyCount(usize),
    #[error("{field} = {value} is outside [0, 1]")]
    Probability { field: &'static str, value: f64 },
    #[error("abort threshold {0} must be finite and non-negative")]
    Threshold(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    State(#[from] QcoreError),
    #[error(transparent)]
    Otp(#[from] OtpError),
}

/// p = (r/2)^{1/M}: the X-basis probability that makes all-X rounds a
/// fraction `r/2` of all rounds.
pub fn basis_probability<T: Real>(sample_ratio: T, parties: usize) -> Result<T, KeyconfError> {
    if parties == 0 {
        return Err(KeyconfError::PartyCount(parties));
    }
    if !(sample_ratio >= T::zero() && sample_ratio <= T::lit(2.0)) {
        return Err(KeyconfError::SampleRatio(sample_ratio.as_f64()));
    }
    let half = sample_ratio / T::lit(2.0);
    Ok(half.powf(T::one() / T::from_usize(parties).unwrap()))
}

/// (1 − (r/2)^{1/M})^M · Π p_t · Π p_d.
pub fn predicted_raw_key_rate<T: Real>(
    sample_ratio: T,
    parties: usize,
    link_transmission: &[T],
    detector_efficiency: &[T],
) -> Result<T, KeyconfError> {
    let p = basis_probability(sample_ratio, parties)?;
    let mut rate = (T::one() - p).powi(parties as i32);
    for (field, values) in [("p_t", link_transmission), ("p_d", detector_efficiency)] {
        for &v in values {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(KeyconfError::Probability { field, value: v.as_f64() });
            }
            rate = rate * v;
        }
    }
    Ok(rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme1Config {
    pub parties: usize,
    pub rounds: u64,
    pub sample_ratio: f64,
    pub abort_threshold_z: f64,
    pub abort_threshold_x: f64,
}

impl Scheme1Config {
    pub fn new(parties: usize, rounds: u64, sample_ratio: f64) -> Result<Self, KeyconfError> {
        let cfg = Self {
            parties,
            rounds,
            sample_ratio,
            abort_threshold_z: DEFAULT_ABORT_THRESHOLD,
            abort_threshold_x: DEFAULT_ABORT_THRESHOLD,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KeyconfError> {
        if !(1..=MAX_PARTIES).contains(&self.parties) {
            return Err(KeyconfError::PartyCount(self.parties));
        }
        basis_probability(self.sample_ratio, self.parties)?;
        for t in [self.abort_threshold_z, self.abort_threshold_x] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(KeyconfError::Threshold(t));
            }
        }
        Ok(())
    }

    pub fn basis_probability(&self) -> f64 {
        basis_probability(self.sample_ratio, self.parties).expect("validated config")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartyEvent {
    Measured(Outcome),
    /// The particle never arrived.
    Lost,
    /// The particle arrived but the detector did not fire.
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartySlot {
    pub basis: Basis,
    pub event: PartyEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoundClass {
    DiscardedLoss,
    DiscardedBasisMismatch,
    KeptZ,
    KeptXSample,
    KeptZSample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    pub slots: Vec<PartySlot>,
    pub class: RoundClass,
}

impl RoundRecord {
    /// All outcomes, when every conferee measured.
    pub fn outcomes(&self) -> Option<Vec<Outcome>> {
        self.slots
            .iter()
            .map(|s| match s.event {
                PartyEvent::Measured(o) => Some(o),
                _ => None,
            })
            .collect()
    }

    fn classify(slots: &[PartySlot]) -> RoundClass {
        if slots.iter().any(|s| !matches!(s.event, PartyEvent::Measured(_))) {
            return RoundClass::DiscardedLoss;
        }
        let first = slots[0].basis;
        if slots.iter().any(|s| s.basis != first) {
            return RoundClass::DiscardedBasisMismatch;
        }
        match first {
            Basis::Z => RoundClass::KeptZ,
            Basis::X => RoundClass::KeptXSample,
            Basis::Y => unreachable!("common-key rounds only use Z and X"),
        }
    }
}

/// One GHZ distribution round over a star rooted at conferee 0.
///
/// Random draws, in order: one transmission per receiving conferee, one
/// basis per conferee, one detector click per conferee, then the
/// measurements.
#[allow(clippy::too_many_arguments)]
pub fn run_distribution_round<T: Real, R: Rng + ?Sized>(
    round: u64,
    config: &Scheme1Config,
    network: &Network,
    attacks: &AttackPlan,
    rng: &mut R,
    bus: &mut ClassicalBus,
    eve: &mut EveRecord,
) -> Result<RoundRecord, KeyconfError> {
    let m = config.parties;
    let p = config.basis_probability();
    let preparer = PartyId(0);
    let labels: Vec<String> = (0..m).map(party_label).collect();
    let mut state = StateVector::<T>::ghz(m)?;

    let mut arrived = vec![true; m];
    let mut eve_seen = Vec::new();
    for l in 1..m {
        let link = network.link(preparer, PartyId(l))?;
        let attack = attacks.on_link(preparer, PartyId(l));
        match transmit_qubit(&mut state, &labels[l], link, &attack, rng)? {
            Delivery::Lost => arrived[l] = false,
            Delivery::Delivered { eve: Some(obs), .. } => eve_seen.push(obs),
            Delivery::Delivered { eve: None, .. } => {}
        }
    }

    let bases: Vec<Basis> = (0..m)
        .map(|_| if rng.random_bool(p) { Basis::X } else { Basis::Z })
        .collect();
    let mut fired = Vec::with_capacity(m);
    for l in 0..m {
        fired.push(detect(network.detector(PartyId(l))?, rng) == Detection::Fired);
    }

    // Qubits nobody reads out leave the register first; averaging over an
    // unread outcome is the partial trace.
    for l in 0..m {
        if !(arrived[l] && fired[l]) {
            state.measure_and_discard(&labels[l], Basis::Z, rng)?;
        }
    }
    let mut slots = Vec::with_capacity(m);
    for l in 0..m {
        let event = if !arrived[l] {
            PartyEvent::Lost
        } else if !fired[l] {
            PartyEvent::Silent
        } else {
            PartyEvent::Measured(state.measure_and_discard(&labels[l], bases[l], rng)?)
        };
        slots.push(PartySlot { basis: bases[l], event });
    }

    let class = RoundRecord::classify(&slots);
    let announced = slots
        .iter()
        .map(|s| matches!(s.event, PartyEvent::Measured(_)).then_some(s.basis))
        .collect();
    bus.broadcast(preparer, round, Announcement::Bases(announced));
    if class == RoundClass::DiscardedLoss {
        bus.broadcast(preparer, round, Announcement::Discard);
    }

    let key_bit = match (class, slots[0].event) {
        (RoundClass::KeptZ, PartyEvent::Measured(o)) => Some(o.bit()),
        _ => None,
    };
    for obs in eve_seen {
        eve.push(EveEvent {
            id: round,
            basis: obs.basis,
            outcome: obs.outcome,
            truth: key_bit,
        });
    }

    Ok(RoundRecord { round, slots, class })
}

/// Per-conferee key strings and the rounds they came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SiftedKeySet {
    pub keys: Vec<Vec<u8>>,
    pub key_rounds: Vec<u64>,
    pub sampled_z_rounds: Vec<u64>,
}

/// Outcomes revealed for error estimation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SamplePartition {
    pub z_samples: Vec<Vec<Outcome>>,
    pub x_samples: Vec<Vec<Outcome>>,
}

/// Reveal every all-X round and an equally sized uniform subset of all-Z
/// rounds; the remaining all-Z rounds become the key. Sampled Z rounds are
/// reclassified as [`RoundClass::KeptZSample`] in place.
pub fn sift_and_sample<R: Rng + ?Sized>(records: &mut [RoundRecord], rng: &mut R) -> (SiftedKeySet, SamplePartition) {
    let z_idx: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.class == RoundClass::KeptZ)
        .map(|(i, _)| i)
        .collect();
    let x_samples: Vec<Vec<Outcome>> = records
        .iter()
        .filter(|r| r.class == RoundClass::KeptXSample)
        .filter_map(RoundRecord::outcomes)
        .collect();

    let take = x_samples.len().min(z_idx.len());
    let mut chosen: Vec<usize> = index::sample(rng, z_idx.len(), take).into_vec();
    chosen.sort_unstable();
    let mut sampled = vec![false; z_idx.len()];
    for c in chosen {
        sampled[c] = true;
    }

    let parties = records.first().map_or(0, |r| r.slots.len());
    let mut sifted = SiftedKeySet {
        keys: vec![Vec::new(); parties],
        ..Default::default()
    };
    let mut partition = SamplePartition {
        x_samples,
        ..Default::default()
    };
    for (k, &i) in z_idx.iter().enumerate() {
        let rec = &mut records[i];
        let outcomes = rec.outcomes().expect("kept rounds are fully measured");
        if sampled[k] {
            rec.class = RoundClass::KeptZSample;
            sifted.sampled_z_rounds.push(rec.round);
            partition.z_samples.push(outcomes);
        } else {
            sifted.key_rounds.push(rec.round);
            for (key, o) in sifted.keys.iter_mut().zip(outcomes) {
                key.push(o.bit());
            }
        }
    }
    (sifted, partition)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub z_samples: usize,
    pub z_errors: usize,
    pub x_samples: usize,
    pub x_errors: usize,
    /// `None` when there were no Z samples.
    pub qber_z: Option<f64>,
    /// `None` when there were no X samples.
    pub qber_x: Option<f64>,
}

pub fn estimate_errors(samples: &SamplePartition) -> ErrorReport {
    let z_errors = samples
        .z_samples
        .iter()
        .filter(|s| s.iter().any(|o| *o != s[0]))
        .count();
    let x_errors = samples
        .x_samples
        .iter()
        .filter(|s| Outcome::parity(s.iter().copied()) != 1)
        .count();
    let rate = |e: usize, n: usize| (n > 0).then(|| e as f64 / n as f64);
    ErrorReport {
        z_samples: samples.z_samples.len(),
        z_errors,
        x_samples: samples.x_samples.len(),
        x_errors,
        qber_z: rate(z_errors, samples.z_samples.len()),
        qber_x: rate(x_errors, samples.x_samples.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbortReason {
    QberZ(f64),
    QberX(f64),
    /// A sample class was empty, so nothing certifies the key.
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Accept,
    Abort(AbortReason),
}

/// Abort when a sampled error rate strictly exceeds its threshold.
pub fn accept_or_abort(report: &ErrorReport, config: &Scheme1Config) -> Decision {
    let (Some(qz), Some(qx)) = (report.qber_z, report.qber_x) else {
        return Decision::Abort(AbortReason::NoSamples);
    };
    if qz > config.abort_threshold_z {
        Decision::Abort(AbortReason::QberZ(qz))
    } else if qx > config.abort_threshold_x {
        Decision::Abort(AbortReason::QberX(qx))
    } else {
        Decision::Accept
    }
}

/// Plain sifting; no reconciliation or privacy amplification.
pub fn distill_raw_key(sifted: &SiftedKeySet) -> Vec<Vec<u8>> {
    sifted.keys.clone()
}

/// Positions where some conferee's key bit differs from conferee 0's.
pub fn key_mismatches(keys: &[Vec<u8>]) -> Vec<usize> {
    let Some(first) = keys.first() else {
        return Vec::new();
    };
    (0..first.len())
        .filter(|&i| keys.iter().any(|k| k.get(i) != Some(&first[i])))
        .collect()
}

/// Everything one key-agreement run produced.
#[derive(Debug, Clone)]
pub struct KeyAgreement {
    pub records: Vec<RoundRecord>,
    pub sifted: SiftedKeySet,
    pub report: ErrorReport,
    pub decision: Decision,
    /// All-Z rounds before sample removal.
    pub kept_z: usize,
}

impl KeyAgreement {
    /// Kept-Z rounds over all rounds: the quantity the raw-key formula predicts.
    pub fn raw_key_fraction(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.kept_z as f64 / self.records.len() as f64
        }
    }
}

/// Run `config.rounds` distribution rounds, sift, sample and decide.
pub fn run_key_agreement<T: Real, R: Rng + ?Sized>(
    config: &Scheme1Config,
    network: &Network,
    attacks: &AttackPlan,
    rng: &mut R,
    bus: &mut ClassicalBus,
    eve: &mut EveRecord,
) -> Result<KeyAgreement, KeyconfError> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds {
        records.push(run_distribution_round::<T, R>(round, config, network, attacks, rng, bus, eve)?);
    }
    let kept_z = records.iter().filter(|r| r.class == RoundClass::KeptZ).count();
    let (sifted, partition) = sift_and_sample(&mut records, rng);
    bus.broadcast(PartyId(0), config.rounds, Announcement::SampleSelection(sifted.sampled_z_rounds.clone()));
    let report = estimate_errors(&partition);
    let decision = accept_or_abort(&report, config);
    bus.broadcast(
        PartyId(0),
        config.rounds,
        Announcement::Verdict {
            accepted: decision == Decision::Accept,
        },
    );
    Ok(KeyAgreement {
        records,
        sifted,
        report,
        decision,
        kept_z,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OtpError {
    #[error("key has {available} bits, message needs {needed}")]
    KeyExhausted { needed: usize, available: usize },
    #[error("bit strings hold only 0 and 1, found {0}")]
    BadBit(u8),
    #[error("key segment {start}..{end} overlaps segment already given to party {owner}")]
    Overlap { start: usize, end: usize, owner: PartyId },
    #[error("key segment {start}..{end} runs past the key length {len}")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("conferee keys have different lengths")]
    KeyLengthMismatch,
    #[error("sender {0} is not a conferee")]
    UnknownSender(PartyId),
}

fn check_bits(bits: &[u8]) -> Result<(), OtpError> {
    match bits.iter().find(|&&b| b > 1) {
        Some(&b) => Err(OtpError::BadBit(b)),
        None => Ok(()),
    }
}

/// XOR `message` with the first `message.len()` bits of `key`.
pub fn otp_encrypt(message: &[u8], key: &[u8]) -> Result<Vec<u8>, OtpError> {
    if key.len() < message.len() {
        return Err(OtpError::KeyExhausted {
            needed: message.len(),
            available: key.len(),
        });
    }
    check_bits(message)?;
    check_bits(&key[..message.len()])?;
    Ok(message.iter().zip(key).map(|(m, k)| m ^ k).collect())
}

pub fn otp_decrypt(ciphertext: &[u8], key: &[u8]) -> Result<Vec<u8>, OtpError> {
    otp_encrypt(ciphertext, key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySegment {
    pub owner: PartyId,
    pub start: usize,
    pub len: usize,
}

impl KeySegment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Which key bits have been handed to which sender. Segments never overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyLedger {
    key_len: usize,
    segments: Vec<KeySegment>,
}

impl KeyLedger {
    pub fn new(key_len: usize) -> Self {
        Self {
            key_len,
            segments: Vec::new(),
        }
    }

    pub fn reserve(&mut self, owner: PartyId, start: usize, len: usize) -> Result<KeySegment, OtpError> {
        let end = start + len;
        if end > self.key_len {
            return Err(OtpError::OutOfRange {
                start,
                end,
                len: self.key_len,
            });
        }
        if let Some(s) = self.segments.iter().find(|s| len > 0 && s.len > 0 && start < s.end() && s.start < end) {
            return Err(OtpError::Overlap { start, end, owner: s.owner });
        }
        let seg = KeySegment { owner, start, len };
        self.segments.push(seg);
        Ok(seg)
    }

    pub fn consumed(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn remaining(&self) -> usize {
        self.key_len - self.consumed()
    }

    pub fn segments(&self) -> &[KeySegment] {
        &self.segments
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub bits: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConferenceOutcome {
    pub ciphertexts: Vec<(PartyId, Vec<u8>)>,
    pub recoveries: Vec<Recovery>,
    pub ledger: KeyLedger,
}

impl ConferenceOutcome {
    pub fn recovered(&self, sender: PartyId, receiver: PartyId) -> Option<&[u8]> {
        self.recoveries
            .iter()
            .find(|r| r.sender == sender && r.receiver == receiver)
            .map(|r| r.bits.as_slice())
    }
}

/// Every sender one-time-pads its message under a contiguous key segment,
/// allocated in party-id order; every other conferee decrypts with its own
/// copy of the key.
pub fn run_secret_conference(
    keys: &[Vec<u8>],
    messages: &[(PartyId, Vec<u8>)],
    bus: &mut ClassicalBus,
) -> Result<ConferenceOutcome, OtpError> {
    let mut order: Vec<&(PartyId, Vec<u8>)> = messages.iter().collect();
    order.sort_by_key(|(sender, _)| *sender);
    let mut plan = Vec::with_capacity(order.len());
    let mut cursor = 0;
    for (sender, msg) in order {
        plan.push((
            KeySegment {
                owner: *sender,
                start: cursor,
                len: msg.len(),
            },
            msg.clone(),
        ));
        cursor += msg.len();
    }
    let available = keys.first().map_or(0, Vec::len);
    if cursor > available {
        return Err(OtpError::KeyExhausted {
            needed: cursor,
            available,
        });
    }
    run_planned_conference(keys, &plan, bus)
}

/// Conference with explicit key segments; overlapping segments are rejected
/// before anything is sent.
pub fn run_planned_conference(
    keys: &[Vec<u8>],
    plan: &[(KeySegment, Vec<u8>)],
    bus: &mut ClassicalBus,
) -> Result<ConferenceOutcome, OtpError> {
    let key_len = keys.first().map_or(0, Vec::len);
    if keys.iter().any(|k| k.len() != key_len) {
        return Err(OtpError::KeyLengthMismatch);
    }
    let mut ledger = KeyLedger::new(key_len);
    for (seg, msg) in plan {
        if seg.owner.0 >= keys.len() {
            return Err(OtpError::UnknownSender(seg.owner));
        }
        if msg.len() != seg.len {
            return Err(OtpError::KeyExhausted {
                needed: msg.len(),
                available: seg.len,
            });
        }
        check_bits(msg)?;
        ledger.reserve(seg.owner, seg.start, seg.len)?;
    }

    let mut ciphertexts = Vec::new();
    let mut recoveries = Vec::new();
    for (round, (seg, msg)) in plan.iter().enumerate() {
        let sender = seg.owner;
        let ct = otp_encrypt(msg, &keys[sender.0][seg.start..seg.end()])?;
        bus.broadcast(sender, round as u64, Announcement::Ciphertext(ct.clone()));
        for (r, key) in keys.iter().enumerate() {
            if r == sender.0 {
                continue;
            }
            recoveries.push(Recovery {
                sender,
                receiver: PartyId(r),
                bits: otp_decrypt(&ct, &key[seg.start..seg.end()])?,
            });
        }
        ciphertexts.push((sender, ct));
    }
    Ok(ConferenceOutcome {
        ciphertexts,
        recoveries,
        ledger,
    })
}
