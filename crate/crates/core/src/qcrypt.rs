//! Quantum-key conferencing.
//!
//! The conferees share a sequence of GHZ systems and use them as a reusable
//! key. The sender attaches a traveling qubit `T` in `|m⟩` and applies
//! CNOT(own key qubit → T); `T` then walks the chain of conferees. Each
//! intermediate conferee copies the plaintext onto a fresh ancilla with
//! CNOT(key → b) and CNOT(T → b), reads the ancilla in Z and forwards `T`.
//! The last conferee applies CNOT(key → T) and reads `T` in Z, which also
//! returns the key system to the GHZ state.
//!
//! Key systems are certified by an X/Y parity check: every non-preparing
//! conferee measures in X or Y at random, the preparer picks the basis that
//! makes the total number of Y measurements even, and the product of all
//! eigenvalues must equal (−1)^{#Y/2}.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::adversary::{AttackPlan, EveEvent, EveRecord};
use crate::channel::{transmit_qubit, Announcement, ChannelError, ClassicalBus, Delivery, Network, PartyId};
use crate::qcore::{party_label, Basis, Outcome, QcoreError, Real, StateVector, ANCILLA_LABEL, MAX_PARTIES, TRAVELING_LABEL};

pub const DEFAULT_PARITY_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcryptError {
    #[error("fraction {0} is out of range")]
    Fraction(f64),
    #[error("party count {0} is outside 2..={MAX_PARTIES}")]
    PartyCount(usize),
    #[error("a quantum key needs at least one system")]
    NoSystems,
    #[error("quantum key has {available} usable systems, {needed} needed")]
    KeyExhausted { needed: usize, available: usize },
    #[error("key system {index} is {status:?}, not Fresh")]
    NotFresh { index: usize, status: SystemStatus },
    #[error("key system {0} already carries a traveling qubit")]
    TravelingInFlight(usize),
    #[error("key system {0} has no traveling qubit")]
    NoTravelingQubit(usize),
    #[error("party {0} is not a conferee")]
    UnknownParty(PartyId),
    #[error("parity error rate {error_rate} exceeds threshold {threshold}")]
    Abort {
        error_rate: f64,
        threshold: f64,
        report: Box<CheckReport>,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    State(#[from] QcoreError),
}

/// Basis of a parity-check measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckBasis {
    X,
    Y,
}

impl From<CheckBasis> for Basis {
    fn from(b: CheckBasis) -> Self {
        match b {
            CheckBasis::X => Basis::X,
            CheckBasis::Y => Basis::Y,
        }
    }
}

/// Preparer's basis and the expected eigenvalue product, given the bases
/// announced by the other conferees.
pub fn choose_check_bases(others: &[CheckBasis]) -> (CheckBasis, i8) {
    let others_y = others.iter().filter(|b| **b == CheckBasis::Y).count();
    let preparer = if others_y % 2 == 0 { CheckBasis::X } else { CheckBasis::Y };
    let total_y = others_y + others_y % 2;
    let parity = if (total_y / 2) % 2 == 0 { 1 } else { -1 };
    (preparer, parity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemStatus {
    Fresh,
    InUse,
    CheckedConsumed,
    CompromisedFlagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumKeySystem<T: Real = f64> {
    pub index: usize,
    pub state: StateVector<T>,
    pub status: SystemStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumKey<T: Real = f64> {
    parties: usize,
    systems: Vec<QuantumKeySystem<T>>,
}

impl<T: Real> QuantumKey<T> {
    /// `len` ideal GHZ systems over `parties` conferees.
    pub fn ideal(parties: usize, len: usize) -> Result<Self, QcryptError> {
        if !(2..=MAX_PARTIES).contains(&parties) {
            return Err(QcryptError::PartyCount(parties));
        }
        if len == 0 {
            return Err(QcryptError::NoSystems);
        }
        let ghz = StateVector::ghz(parties)?;
        Ok(Self {
            parties,
            systems: (0..len)
                .map(|index| QuantumKeySystem {
                    index,
                    state: ghz.clone(),
                    status: SystemStatus::Fresh,
                })
                .collect(),
        })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn original_len(&self) -> usize {
        self.systems.len()
    }

    pub fn usable_len(&self) -> usize {
        self.systems.iter().filter(|s| s.status == SystemStatus::Fresh).count()
    }

    pub fn systems(&self) -> &[QuantumKeySystem<T>] {
        &self.systems
    }

    pub fn system(&self, index: usize) -> &QuantumKeySystem<T> {
        &self.systems[index]
    }

    pub fn system_mut(&mut self, index: usize) -> &mut QuantumKeySystem<T> {
        &mut self.systems[index]
    }

    pub fn fresh_indices(&self) -> Vec<usize> {
        self.systems
            .iter()
            .filter(|s| s.status == SystemStatus::Fresh)
            .map(|s| s.index)
            .collect()
    }

    /// Fidelity of system `index` with the ideal GHZ state.
    pub fn fidelity_with_ghz(&self, index: usize) -> Result<T, QcryptError> {
        let ghz = StateVector::ghz(self.parties)?;
        Ok(self.systems[index].state.fidelity(&ghz)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRecord {
    pub system: usize,
    pub other_bases: Vec<CheckBasis>,
    pub preparer_basis: CheckBasis,
    /// Outcomes in conferee order, preparer first.
    pub outcomes: Vec<Outcome>,
    pub expected_parity: i8,
    pub observed_parity: i8,
}

impl CheckRecord {
    pub fn passed(&self) -> bool {
        self.expected_parity == self.observed_parity
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckReport {
    pub records: Vec<CheckRecord>,
}

impl CheckReport {
    pub fn checked(&self) -> usize {
        self.records.len()
    }

    pub fn errors(&self) -> usize {
        self.records.iter().filter(|r| !r.passed()).count()
    }

    /// `None` when nothing was checked.
    pub fn error_rate(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.errors() as f64 / self.records.len() as f64)
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.records.extend(other.records);
    }

    fn verdict(self, threshold: f64) -> Result<Self, QcryptError> {
        match self.error_rate() {
            Some(rate) if rate > threshold => Err(QcryptError::Abort {
                error_rate: rate,
                threshold,
                report: Box::new(self),
            }),
            _ => Ok(self),
        }
    }
}

/// Run the X/Y parity check on one system, consuming it.
pub fn check_system<T: Real, R: Rng + ?Sized>(
    system: &mut QuantumKeySystem<T>,
    parties: usize,
    rng: &mut R,
    bus: &mut ClassicalBus,
) -> Result<CheckRecord, QcryptError> {
    let other_bases: Vec<CheckBasis> = (1..parties)
        .map(|_| if rng.random_bool(0.5) { CheckBasis::Y } else { CheckBasis::X })
        .collect();
    let (preparer_basis, expected_parity) = choose_check_bases(&other_bases);
    let mut outcomes = vec![Outcome::Plus; parties];
    for (l, b) in other_bases.iter().enumerate() {
        outcomes[l + 1] = system.state.measure_and_discard(&party_label(l + 1), (*b).into(), rng)?;
    }
    outcomes[0] = system
        .state
        .measure_and_discard(&party_label(0), preparer_basis.into(), rng)?;
    system.status = SystemStatus::CheckedConsumed;

    let round = system.index as u64;
    let mut announced: Vec<Option<Basis>> = vec![Some(preparer_basis.into())];
    announced.extend(other_bases.iter().map(|b| Some(Basis::from(*b))));
    bus.broadcast(PartyId(0), round, Announcement::Bases(announced));
    bus.broadcast(PartyId(0), round, Announcement::Outcomes(outcomes.clone()));

    Ok(CheckRecord {
        system: system.index,
        other_bases,
        preparer_basis,
        observed_parity: Outcome::parity(outcomes.iter().copied()),
        outcomes,
        expected_parity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstablishParams {
    pub parties: usize,
    pub systems: usize,
    pub check_fraction: f64,
    pub parity_threshold: f64,
}

impl EstablishParams {
    pub fn new(parties: usize, systems: usize, check_fraction: f64) -> Self {
        Self {
            parties,
            systems,
            check_fraction,
            parity_threshold: DEFAULT_PARITY_THRESHOLD,
        }
    }
}

/// Distribute `systems` GHZ states from conferee 0, check a random
/// `check_fraction` of the delivered ones, keep the rest as the key.
///
/// Systems whose particle was lost stay in the key as
/// [`SystemStatus::CompromisedFlagged`] so indices keep their distribution
/// order.
pub fn establish_quantum_key<T: Real, R: Rng + ?Sized>(
    params: &EstablishParams,
    network: &Network,
    attacks: &AttackPlan,
    rng: &mut R,
    bus: &mut ClassicalBus,
    eve: &mut EveRecord,
) -> Result<(QuantumKey<T>, CheckReport), QcryptError> {
    if !(0.0..1.0).contains(&params.check_fraction) {
        return Err(QcryptError::Fraction(params.check_fraction));
    }
    let mut key = QuantumKey::<T>::ideal(params.parties, params.systems)?;
    let preparer = PartyId(0);
    let mut report = CheckReport::default();
    for j in 0..params.systems {
        let system = &mut key.systems[j];
        let mut lost = false;
        for l in 1..params.parties {
            let label = party_label(l);
            let link = network.link(preparer, PartyId(l))?;
            let attack = attacks.on_link(preparer, PartyId(l));
            match transmit_qubit(&mut system.state, &label, link, &attack, rng)? {
                Delivery::Lost => lost = true,
                Delivery::Delivered { eve: Some(obs), .. } => eve.push(EveEvent {
                    id: j as u64,
                    basis: obs.basis,
                    outcome: obs.outcome,
                    truth: None,
                }),
                Delivery::Delivered { eve: None, .. } => {}
            }
        }
        if lost {
            system.status = SystemStatus::CompromisedFlagged;
            bus.broadcast(preparer, j as u64, Announcement::FlagSystem(j));
            continue;
        }
        if rng.random_bool(params.check_fraction) {
            report.records.push(check_system(system, params.parties, rng, bus)?);
        }
    }
    let report = report.verdict(params.parity_threshold)?;
    Ok((key, report))
}

/// Encrypt bit `m` onto a fresh traveling qubit with CNOT(sender key → T).
pub fn encrypt_bit<T: Real>(system: &mut QuantumKeySystem<T>, sender: PartyId, m: u8) -> Result<(), QcryptError> {
    if system.status != SystemStatus::Fresh {
        return Err(QcryptError::NotFresh {
            index: system.index,
            status: system.status,
        });
    }
    if system.state.contains(TRAVELING_LABEL) {
        return Err(QcryptError::TravelingInFlight(system.index));
    }
    let key_label = key_label(&system.state, sender)?;
    system.state.attach_qubit(TRAVELING_LABEL, m)?;
    system.state.apply_cnot(&key_label, TRAVELING_LABEL)?;
    system.status = SystemStatus::InUse;
    Ok(())
}

fn key_label<T: Real>(state: &StateVector<T>, party: PartyId) -> Result<String, QcryptError> {
    if party.0 >= MAX_PARTIES {
        return Err(QcryptError::UnknownParty(party));
    }
    let label = party_label(party.0);
    if !state.contains(&label) {
        return Err(QcryptError::UnknownParty(party));
    }
    Ok(label)
}

// Ancilla in |0⟩, then CNOT(key → b), CNOT(T → b). Leaves b in |m⟩.
fn copy_to_ancilla<T: Real>(state: &mut StateVector<T>, key_label: &str) -> Result<(), QcryptError> {
    state.attach_qubit(ANCILLA_LABEL, 0)?;
    state.apply_cnot(key_label, ANCILLA_LABEL)?;
    state.apply_cnot(TRAVELING_LABEL, ANCILLA_LABEL)?;
    Ok(())
}

/// Read the plaintext bit through an ancilla; `T` stays for forwarding.
pub fn intermediate_decrypt<T: Real, R: Rng + ?Sized>(
    system: &mut QuantumKeySystem<T>,
    party: PartyId,
    rng: &mut R,
) -> Result<u8, QcryptError> {
    if !system.state.contains(TRAVELING_LABEL) {
        return Err(QcryptError::NoTravelingQubit(system.index));
    }
    let key_label = key_label(&system.state, party)?;
    copy_to_ancilla(&mut system.state, &key_label)?;
    Ok(system.state.measure_and_discard(ANCILLA_LABEL, Basis::Z, rng)?.bit())
}

/// Undo the encryption with CNOT(key → T) and read `T`. The system is
/// usable again afterwards.
pub fn final_decrypt<T: Real, R: Rng + ?Sized>(
    system: &mut QuantumKeySystem<T>,
    party: PartyId,
    rng: &mut R,
) -> Result<u8, QcryptError> {
    if !system.state.contains(TRAVELING_LABEL) {
        return Err(QcryptError::NoTravelingQubit(system.index));
    }
    let key_label = key_label(&system.state, party)?;
    system.state.apply_cnot(&key_label, TRAVELING_LABEL)?;
    let bit = system.state.measure_and_discard(TRAVELING_LABEL, Basis::Z, rng)?.bit();
    system.status = SystemStatus::Fresh;
    Ok(bit)
}

/// Receivers in chain order after `sender`: sender+1, sender+2, … (mod M).
pub fn chain_after(sender: PartyId, parties: usize) -> Vec<PartyId> {
    (1..parties).map(|k| PartyId((sender.0 + k) % parties)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageRoundReport {
    /// Bits read by each receiver, in chain order.
    pub received: Vec<(PartyId, Vec<u8>)>,
    /// Key systems that carried a delivered bit, one per bit.
    pub systems_used: Vec<usize>,
    /// Systems whose traveling qubit was lost in flight.
    pub flagged: Vec<usize>,
    pub retransmissions: usize,
    /// False when the key ran out before every bit was delivered.
    pub complete: bool,
}

impl MessageRoundReport {
    /// Fraction of (receiver, bit) readings equal to the plaintext, over
    /// delivered bits. `None` if nothing was delivered.
    pub fn bit_accuracy(&self, plaintext: &[u8]) -> Option<f64> {
        let mut total = 0usize;
        let mut correct = 0usize;
        for (_, bits) in &self.received {
            for (b, m) in bits.iter().zip(plaintext) {
                total += 1;
                correct += usize::from(b == m);
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

/// Send `message` from `sender` around the chain, one key system per bit.
///
/// A traveling qubit lost on any hop flags its key system and the bit is
/// re-sent on the next fresh system; earlier readings of the lost copy are
/// dropped.
#[allow(clippy::too_many_arguments)]
pub fn run_message_round<T: Real, R: Rng + ?Sized>(
    key: &mut QuantumKey<T>,
    sender: PartyId,
    message: &[u8],
    network: &Network,
    attacks: &AttackPlan,
    rng: &mut R,
    bus: &mut ClassicalBus,
    eve: &mut EveRecord,
) -> Result<MessageRoundReport, QcryptError> {
    if sender.0 >= key.parties {
        return Err(QcryptError::UnknownParty(sender));
    }
    let available = key.usable_len();
    if message.len() > available {
        return Err(QcryptError::KeyExhausted {
            needed: message.len(),
            available,
        });
    }
    let chain = chain_after(sender, key.parties);
    let last = *chain.last().expect("at least two conferees");
    let mut fresh = key.fresh_indices().into_iter();
    let mut report = MessageRoundReport {
        received: chain.iter().map(|p| (*p, Vec::with_capacity(message.len()))).collect(),
        complete: true,
        ..Default::default()
    };

    'bits: for (bit_index, &bit) in message.iter().enumerate() {
        loop {
            let Some(j) = fresh.next() else {
                report.complete = false;
                break 'bits;
            };
            let system = &mut key.systems[j];
            encrypt_bit(system, sender, bit)?;
            let mut readings = Vec::with_capacity(chain.len());
            let mut prev = sender;
            let mut delivered = true;
            for &party in &chain {
                let link = network.link(prev, party)?;
                let attack = attacks.on_link(prev, party);
                match transmit_qubit(&mut system.state, TRAVELING_LABEL, link, &attack, rng)? {
                    Delivery::Lost => {
                        delivered = false;
                        break;
                    }
                    Delivery::Delivered { eve: Some(obs), .. } => eve.push(EveEvent {
                        id: j as u64,
                        basis: obs.basis,
                        outcome: obs.outcome,
                        truth: Some(bit),
                    }),
                    Delivery::Delivered { eve: None, .. } => {}
                }
                let read = if party == last {
                    final_decrypt(system, party, rng)?
                } else {
                    intermediate_decrypt(system, party, rng)?
                };
                readings.push(read);
                prev = party;
            }
            if delivered {
                for ((_, bits), read) in report.received.iter_mut().zip(readings) {
                    bits.push(read);
                }
                report.systems_used.push(j);
                break;
            }
            // The lost qubit is gone; averaging over its unread value traces it out.
            system.state.measure_and_discard(TRAVELING_LABEL, Basis::Z, rng)?;
            system.status = SystemStatus::CompromisedFlagged;
            report.flagged.push(j);
            report.retransmissions += 1;
            bus.broadcast(sender, j as u64, Announcement::FlagSystem(j));
            bus.broadcast(sender, j as u64, Announcement::Retransmit { bit_index, system: j });
        }
    }
    Ok(report)
}

/// Check `ceil(fraction · usable)` uniformly chosen fresh systems and
/// consume them. On abort the key has already shrunk.
pub fn reuse_check<T: Real, R: Rng + ?Sized>(
    key: &mut QuantumKey<T>,
    fraction: f64,
    parity_threshold: f64,
    rng: &mut R,
    bus: &mut ClassicalBus,
) -> Result<CheckReport, QcryptError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(QcryptError::Fraction(fraction));
    }
    let fresh = key.fresh_indices();
    let count = ((fraction * fresh.len() as f64).ceil() as usize).min(fresh.len());
    let mut chosen: Vec<usize> = index::sample(rng, fresh.len(), count).into_iter().map(|i| fresh[i]).collect();
    chosen.sort_unstable();
    bus.broadcast(
        PartyId(0),
        0,
        Announcement::SampleSelection(chosen.iter().map(|&j| j as u64).collect()),
    );
    let parties = key.parties;
    let mut report = CheckReport::default();
    for j in chosen {
        report.records.push(check_system(&mut key.systems[j], parties, rng, bus)?);
    }
    report.verdict(parity_threshold)
}
