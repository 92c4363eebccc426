//! Exhaustive cross-checks of the engine against direct Born-rule sums.
//!
//! The engine side measures qubit by qubit with `outcome_probabilities` and
//! `collapse`, branching over every outcome. The reference side projects the
//! full amplitude vector onto each product eigenvector using its own
//! eigenvector table, so a wrong sign or phase in either shows up as a
//! deviation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{expected_attack_signature, AttackKind, AttackSignature, EveBasis};
use crate::channel::PartyId;
use crate::qcore::{party_label, Basis, DensityMatrix2, Outcome, QcoreError, StateVector, TRAVELING_LABEL};
use crate::qcrypt::{choose_check_bases, encrypt_bit, CheckBasis, QuantumKey, QcryptError};

/// Largest conferee count the exhaustive tables cover.
pub const MAX_ORACLE_PARTIES: usize = 4;

/// Deviation above which the engine and the reference disagree.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

const RANDOM_STATE_SEED: u64 = 0x0AC1_E5EE_D000_0001;
const RANDOM_STATES_PER_SIZE: usize = 4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle tables cover 2..={MAX_ORACLE_PARTIES} conferees, got {0}")]
    PartyCount(usize),
    #[error(transparent)]
    State(#[from] QcoreError),
    #[error(transparent)]
    Key(#[from] QcryptError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSection {
    pub section: String,
    #[serde(rename = "M")]
    pub parties: usize,
    /// Basis patterns, states or table entries compared.
    pub cases: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub sections: Vec<OracleSection>,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        self.sections.iter().map(|s| s.max_deviation).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() < ORACLE_TOLERANCE
    }
}

/// Run every table for 2..=`max_parties` conferees.
pub fn oracle_tables(max_parties: usize) -> Result<OracleReport, OracleError> {
    if !(2..=MAX_ORACLE_PARTIES).contains(&max_parties) {
        return Err(OracleError::PartyCount(max_parties));
    }
    let mut sections = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_STATE_SEED);
    for m in 2..=max_parties {
        let ghz = StateVector::<f64>::ghz(m)?;
        let (cases, dev) = compare_all_patterns(&ghz)?;
        sections.push(section("ghz-born", m, cases, dev));

        let mut cases = 0;
        let mut dev = 0.0f64;
        let mut rebuild = 0.0f64;
        let mut mixed = 0.0f64;
        for bit in 0..2u8 {
            let encrypted = encrypted_state(m, bit)?;
            let (c, d) = compare_all_patterns(&encrypted)?;
            cases += c;
            dev = dev.max(d);
            rebuild = rebuild.max(max_amplitude_diff(&encrypted, &expected_encrypted(m, bit)));
            mixed = mixed.max(
                encrypted
                    .reduced_density(TRAVELING_LABEL)?
                    .max_abs_diff(&DensityMatrix2::maximally_mixed()),
            );
        }
        sections.push(section("encrypted-born", m, cases, dev));
        sections.push(section("encrypted-amplitudes", m, 2, rebuild));
        sections.push(section("traveling-reduced-state", m, 2, mixed));

        let mut cases = 0;
        let mut dev = 0.0f64;
        for _ in 0..RANDOM_STATES_PER_SIZE {
            let state = random_state(m, &mut rng)?;
            let (c, d) = compare_all_patterns(&state)?;
            cases += c;
            dev = dev.max(d);
        }
        sections.push(section("random-born", m, cases, dev));

        let mut dev = 0.0f64;
        let kinds = attack_kinds();
        for &kind in &kinds {
            let engine = engine_signature(kind, m)?;
            let table = expected_attack_signature(kind, m)?;
            dev = dev
                .max((engine.qber_z - table.qber_z).abs())
                .max((engine.qber_x - table.qber_x).abs())
                .max((engine.check_parity_error - table.check_parity_error).abs());
        }
        sections.push(section("attack-signatures", m, kinds.len(), dev));
    }
    Ok(OracleReport { sections })
}

fn section(name: &str, parties: usize, cases: usize, max_deviation: f64) -> OracleSection {
    OracleSection {
        section: name.to_string(),
        parties,
        cases,
        max_deviation,
    }
}

/// Every strategy that acts on a distributed GHZ particle.
pub fn attack_kinds() -> Vec<AttackKind> {
    vec![
        AttackKind::None,
        AttackKind::InterceptResend(EveBasis::Z),
        AttackKind::InterceptResend(EveBasis::X),
        AttackKind::InterceptResend(EveBasis::Y),
        AttackKind::InterceptResend(EveBasis::RandomZX),
    ]
}

/// GHZ over `m` conferees with bit `bit` encrypted by conferee 0 onto `T`.
pub fn encrypted_state(m: usize, bit: u8) -> Result<StateVector<f64>, OracleError> {
    let mut key = QuantumKey::<f64>::ideal(m, 1)?;
    let system = key.system_mut(0);
    encrypt_bit(system, PartyId(0), bit)?;
    let mut order: Vec<String> = (0..m).map(party_label).collect();
    order.push(TRAVELING_LABEL.to_string());
    Ok(system.state.reordered(&order)?)
}

/// `(|0…0⟩|m⟩ + |1…1⟩|1−m⟩)/√2` with `T` last, written out directly.
fn expected_encrypted(m: usize, bit: u8) -> Vec<Complex64> {
    let dim = 1usize << (m + 1);
    let h = Complex64::new(0.5f64.sqrt(), 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    let ones = (1usize << m) - 1;
    amps[bit as usize] = h;
    amps[(ones << 1) | (1 - bit as usize)] = h;
    amps
}

fn max_amplitude_diff(state: &StateVector<f64>, expected: &[Complex64]) -> f64 {
    if state.amplitudes().len() != expected.len() {
        return f64::INFINITY;
    }
    state
        .amplitudes()
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

fn random_state<R: Rng>(n: usize, rng: &mut R) -> Result<StateVector<f64>, OracleError> {
    let raw: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let labels: Vec<String> = (0..n).map(party_label).collect();
    Ok(StateVector::from_amplitudes(labels, raw.into_iter().map(|a| a / norm).collect())?)
}

/// All `3^n` basis patterns over the register's qubits, in label order.
pub fn all_patterns(n: usize) -> Vec<Vec<Basis>> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                Basis::ALL.iter().map(move |&b| {
                    let mut q = p.clone();
                    q.push(b);
                    q
                })
            })
            .collect();
    }
    out
}

/// Compare engine and reference distributions for every pattern; returns
/// (patterns, max deviation).
pub fn compare_all_patterns(state: &StateVector<f64>) -> Result<(usize, f64), OracleError> {
    let patterns = all_patterns(state.num_qubits());
    let mut dev = 0.0f64;
    for bases in &patterns {
        let engine = engine_distribution(state, bases)?;
        let reference = born_distribution(state.amplitudes(), bases);
        for (a, b) in engine.iter().zip(&reference) {
            dev = dev.max((a - b).abs());
        }
    }
    Ok((patterns.len(), dev))
}

/// Joint outcome distribution from sequential engine measurements; index
/// bit `n-1-k` is qubit `k`'s outcome bit.
pub fn engine_distribution(state: &StateVector<f64>, bases: &[Basis]) -> Result<Vec<f64>, OracleError> {
    let labels: Vec<String> = state.labels().to_vec();
    let mut dist = vec![0.0; 1 << bases.len()];
    branch(state.clone(), &labels, bases, 0, 0, 1.0, &mut dist)?;
    Ok(dist)
}

fn branch(
    state: StateVector<f64>,
    labels: &[String],
    bases: &[Basis],
    k: usize,
    index: usize,
    weight: f64,
    dist: &mut [f64],
) -> Result<(), OracleError> {
    if k == bases.len() {
        dist[index] += weight;
        return Ok(());
    }
    let probs = state.outcome_probabilities(&labels[k], bases[k])?;
    for (o, outcome) in Outcome::BOTH.into_iter().enumerate() {
        if probs[o] <= 0.0 {
            continue;
        }
        let mut next = state.clone();
        next.collapse(&labels[k], bases[k], outcome)?;
        branch(next, labels, bases, k + 1, (index << 1) | o, weight * probs[o], dist)?;
    }
    Ok(())
}

// Reference eigenvectors: row = basis (Z, X, Y), column = outcome bit.
fn reference_eigenvector(basis: Basis, bit: usize) -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = if bit == 0 { 1.0 } else { -1.0 };
    match basis {
        Basis::Z if bit == 0 => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        Basis::Z => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        Basis::X => [Complex64::new(h, 0.0), Complex64::new(s * h, 0.0)],
        Basis::Y => [Complex64::new(h, 0.0), Complex64::new(0.0, s * h)],
    }
}

/// `P(o) = |Σ_x ψ(x) Π_k conj(e_k(o_k))[x_k]|²` for every outcome string.
pub fn born_distribution(amplitudes: &[Complex64], bases: &[Basis]) -> Vec<f64> {
    let n = bases.len();
    (0..1usize << n)
        .map(|o| {
            let mut amp = Complex64::new(0.0, 0.0);
            for (x, psi) in amplitudes.iter().enumerate() {
                let mut overlap = *psi;
                for (k, &b) in bases.iter().enumerate() {
                    let shift = n - 1 - k;
                    let e = reference_eigenvector(b, (o >> shift) & 1);
                    overlap *= e[(x >> shift) & 1].conj();
                }
                amp += overlap;
            }
            amp.norm_sqr()
        })
        .collect()
}

/// Attack signature computed by branching the engine over Eve's basis and
/// outcome on conferee 1's particle.
pub fn engine_signature(kind: AttackKind, m: usize) -> Result<AttackSignature, OracleError> {
    let ghz = StateVector::<f64>::ghz(m)?;
    let target = party_label(1);
    let eve_bases: Vec<(f64, Basis)> = match kind {
        AttackKind::None | AttackKind::TravelingMeasureZ => vec![],
        AttackKind::InterceptResend(EveBasis::Z) => vec![(1.0, Basis::Z)],
        AttackKind::InterceptResend(EveBasis::X) => vec![(1.0, Basis::X)],
        AttackKind::InterceptResend(EveBasis::Y) => vec![(1.0, Basis::Y)],
        AttackKind::InterceptResend(EveBasis::RandomZX) => vec![(0.5, Basis::Z), (0.5, Basis::X)],
    };
    let mut branches = Vec::new();
    if eve_bases.is_empty() {
        branches.push((1.0, ghz.clone()));
    }
    for (w, basis) in eve_bases {
        let probs = ghz.outcome_probabilities(&target, basis)?;
        for (o, outcome) in Outcome::BOTH.into_iter().enumerate() {
            if probs[o] > 0.0 {
                let mut s = ghz.clone();
                s.collapse(&target, basis, outcome)?;
                branches.push((w * probs[o], s));
            }
        }
    }

    let parity_of = |index: usize| -> i8 {
        if index.count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    };
    let mut qber_z = 0.0;
    let mut qber_x = 0.0;
    let mut check = 0.0;
    let patterns = 1usize << (m - 1);
    for (w, state) in &branches {
        let z = engine_distribution(state, &vec![Basis::Z; m])?;
        let all_equal = [0, (1 << m) - 1];
        qber_z += w * z
            .iter()
            .enumerate()
            .filter(|(i, _)| !all_equal.contains(i))
            .map(|(_, p)| p)
            .sum::<f64>();
        let x = engine_distribution(state, &vec![Basis::X; m])?;
        qber_x += w * x.iter().enumerate().filter(|(i, _)| parity_of(*i) == -1).map(|(_, p)| p).sum::<f64>();

        for pattern in 0..patterns {
            let others: Vec<CheckBasis> = (1..m)
                .map(|l| if pattern & (1 << (l - 1)) != 0 { CheckBasis::Y } else { CheckBasis::X })
                .collect();
            let (prep, expected) = choose_check_bases(&others);
            let bases: Vec<Basis> = std::iter::once(prep)
                .chain(others)
                .map(|b| match b {
                    CheckBasis::X => Basis::X,
                    CheckBasis::Y => Basis::Y,
                })
                .collect();
            let d = engine_distribution(state, &bases)?;
            let fail: f64 = d.iter().enumerate().filter(|(i, _)| parity_of(*i) != expected).map(|(_, p)| p).sum();
            check += w * fail / patterns as f64;
        }
    }
    Ok(AttackSignature {
        qber_z,
        qber_x,
        check_parity_error: check,
    })
}
