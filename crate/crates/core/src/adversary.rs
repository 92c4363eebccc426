//! Eavesdropper strategies and what they leave behind.
//!
//! Eve has no quantum memory: every strategy measures a qubit in flight and
//! forwards the collapsed qubit. [`expected_attack_signature`] evaluates the
//! resulting sample error rates exactly from the attacked density matrix,
//! without touching the state-vector engine, so Monte Carlo runs have an
//! independent reference.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PartyId;
use crate::qcore::{Basis, Outcome, QcoreError, Real, StateVector, TRAVELING_LABEL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("no exact signature for {0:?}")]
    Unsupported(AttackKind),
    #[error("signature oracle supports 2..=6 parties, got {0}")]
    PartyCount(usize),
    #[error("attacked party {0} is not a receiving conferee")]
    BadTarget(usize),
    #[error("more than one attack configured on link {0}->{1}")]
    DuplicateLink(PartyId, PartyId),
    #[error("traveling qubit `{TRAVELING_LABEL}` is not in the register")]
    NoTravelingQubit,
    #[error(transparent)]
    State(#[from] QcoreError),
}

/// Basis Eve uses for intercept-resend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EveBasis {
    Z,
    X,
    Y,
    /// Z or X with probability 1/2 each, drawn per qubit.
    RandomZX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    /// Measure GHZ particles on the link, resend the collapsed qubit.
    /// Traveling qubits pass untouched.
    InterceptResend(EveBasis),
    /// Measure the traveling qubit in Z, resend. GHZ particles pass untouched.
    TravelingMeasureZ,
}

/// The strategy active on one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackStrategy {
    pub kind: AttackKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EveObservation {
    pub basis: Basis,
    pub outcome: Outcome,
}

impl AttackStrategy {
    pub const fn none() -> Self {
        Self { kind: AttackKind::None }
    }

    pub const fn new(kind: AttackKind) -> Self {
        Self { kind }
    }

    /// Act on the in-flight qubit `label`, if this strategy targets it.
    pub fn intercept<T: Real, R: Rng + ?Sized>(
        &self,
        state: &mut StateVector<T>,
        label: &str,
        rng: &mut R,
    ) -> Result<Option<EveObservation>, QcoreError> {
        let traveling = label == TRAVELING_LABEL;
        match self.kind {
            AttackKind::None => Ok(None),
            AttackKind::InterceptResend(basis) if !traveling => {
                attack_intercept_resend(state, label, basis, rng).map(Some)
            }
            AttackKind::TravelingMeasureZ if traveling => {
                attack_intercept_resend(state, label, EveBasis::Z, rng).map(Some)
            }
            _ => Ok(None),
        }
    }
}

/// An attack pinned to a directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedAttack {
    pub from: PartyId,
    pub to: PartyId,
    pub kind: AttackKind,
}

/// All attacks of a scenario, at most one per link.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackPlan {
    attacks: Vec<TargetedAttack>,
}

impl AttackPlan {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn new(attacks: Vec<TargetedAttack>) -> Result<Self, AdversaryError> {
        for (i, a) in attacks.iter().enumerate() {
            if attacks[..i].iter().any(|b| b.from == a.from && b.to == a.to) {
                return Err(AdversaryError::DuplicateLink(a.from, a.to));
            }
        }
        Ok(Self { attacks })
    }

    pub fn single(from: PartyId, to: PartyId, kind: AttackKind) -> Self {
        Self {
            attacks: vec![TargetedAttack { from, to, kind }],
        }
    }

    pub fn on_link(&self, from: PartyId, to: PartyId) -> AttackStrategy {
        self.attacks
            .iter()
            .find(|a| a.from == from && a.to == to)
            .map(|a| AttackStrategy::new(a.kind))
            .unwrap_or(AttackStrategy::none())
    }

    pub fn attacks(&self) -> &[TargetedAttack] {
        &self.attacks
    }

    pub fn is_honest(&self) -> bool {
        self.attacks.iter().all(|a| a.kind == AttackKind::None)
    }
}

/// Measure `label` in Eve's basis and leave the collapsed qubit in place.
pub fn attack_intercept_resend<T: Real, R: Rng + ?Sized>(
    state: &mut StateVector<T>,
    label: &str,
    basis: EveBasis,
    rng: &mut R,
) -> Result<EveObservation, QcoreError> {
    let basis = match basis {
        EveBasis::Z => Basis::Z,
        EveBasis::X => Basis::X,
        EveBasis::Y => Basis::Y,
        EveBasis::RandomZX => {
            if rng.random_bool(0.5) {
                Basis::Z
            } else {
                Basis::X
            }
        }
    };
    let outcome = state.measure(label, basis, rng)?;
    Ok(EveObservation { basis, outcome })
}

/// Z-measure the traveling qubit and resend it.
pub fn attack_traveling_measure<T: Real, R: Rng + ?Sized>(
    state: &mut StateVector<T>,
    rng: &mut R,
) -> Result<EveObservation, AdversaryError> {
    if !state.contains(TRAVELING_LABEL) {
        return Err(AdversaryError::NoTravelingQubit);
    }
    Ok(attack_intercept_resend(state, TRAVELING_LABEL, EveBasis::Z, rng)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EveEvent {
    /// Round or key-system id.
    pub id: u64,
    pub basis: Basis,
    pub outcome: Outcome,
    /// Ground-truth bit the observation is scored against, when known.
    pub truth: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EveRecord {
    events: Vec<EveEvent>,
}

impl EveRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: EveEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[EveEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// (Eve's bit, truth bit) for every scored event.
    pub fn scored_pairs(&self) -> Vec<(u8, u8)> {
        self.events
            .iter()
            .filter_map(|e| e.truth.map(|t| (e.outcome.bit(), t)))
            .collect()
    }

    pub fn mutual_information(&self) -> f64 {
        mutual_information(&self.scored_pairs())
    }
}

/// Plug-in estimate of I(X;Y) in bits from paired binary samples.
/// An empty sample has zero information.
pub fn mutual_information(pairs: &[(u8, u8)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut joint = [[0usize; 2]; 2];
    for &(a, b) in pairs {
        joint[(a & 1) as usize][(b & 1) as usize] += 1;
    }
    let n = pairs.len() as f64;
    let pa = [
        (joint[0][0] + joint[0][1]) as f64 / n,
        (joint[1][0] + joint[1][1]) as f64 / n,
    ];
    let pb = [
        (joint[0][0] + joint[1][0]) as f64 / n,
        (joint[0][1] + joint[1][1]) as f64 / n,
    ];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let pab = joint[a][b] as f64 / n;
            if pab > 0.0 {
                mi += pab * (pab / (pa[a] * pb[b])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Exact sample error rates caused by one attacked GHZ link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSignature {
    /// P(not all Z outcomes agree) in an all-Z round.
    pub qber_z: f64,
    /// P(product of X eigenvalues is −1) in an all-X round.
    pub qber_x: f64,
    /// P(X/Y parity check fails), averaged over uniform X/Y choices of the
    /// non-preparing conferees.
    pub check_parity_error: f64,
}

/// Signature of `kind` acting on the particle sent to conferee 1.
pub fn expected_attack_signature(kind: AttackKind, parties: usize) -> Result<AttackSignature, AdversaryError> {
    expected_attack_signature_on(kind, parties, 1)
}

pub fn expected_attack_signature_on(
    kind: AttackKind,
    parties: usize,
    target: usize,
) -> Result<AttackSignature, AdversaryError> {
    if !(2..=6).contains(&parties) {
        return Err(AdversaryError::PartyCount(parties));
    }
    if target == 0 || target >= parties {
        return Err(AdversaryError::BadTarget(target));
    }
    let ghz = Dense::ghz(parties);
    let rho = match kind {
        AttackKind::None => ghz,
        AttackKind::InterceptResend(EveBasis::Z) => ghz.dephase(target, parties, Basis::Z),
        AttackKind::InterceptResend(EveBasis::X) => ghz.dephase(target, parties, Basis::X),
        AttackKind::InterceptResend(EveBasis::Y) => ghz.dephase(target, parties, Basis::Y),
        AttackKind::InterceptResend(EveBasis::RandomZX) => {
            let z = ghz.dephase(target, parties, Basis::Z);
            let x = ghz.dephase(target, parties, Basis::X);
            z.average(&x)
        }
        AttackKind::TravelingMeasureZ => return Err(AdversaryError::Unsupported(kind)),
    };
    let d = rho.dim;
    let qber_z = 1.0 - rho.at(0, 0).re - rho.at(d - 1, d - 1).re;
    let all_x = vec![Basis::X; parties];
    let qber_x = (1.0 - rho.pauli_expectation(&all_x)) / 2.0;

    let patterns = 1usize << (parties - 1);
    let mut err = 0.0;
    for pattern in 0..patterns {
        let mut bases = vec![Basis::X; parties];
        for (l, b) in bases.iter_mut().enumerate().skip(1) {
            if pattern & (1 << (l - 1)) != 0 {
                *b = Basis::Y;
            }
        }
        let others_y = pattern.count_ones() as usize;
        if others_y % 2 == 1 {
            bases[0] = Basis::Y;
        }
        let total_y = others_y + others_y % 2;
        let expected = if (total_y / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        err += (1.0 - expected * rho.pauli_expectation(&bases)) / 2.0;
    }
    Ok(AttackSignature {
        qber_z: clean(qber_z),
        qber_x: clean(qber_x),
        check_parity_error: clean(err / patterns as f64),
    })
}

// Snap rounding dust so exact table values compare equal.
fn clean(x: f64) -> f64 {
    let snapped = (x * 1e12).round() / 1e12;
    if (snapped - x).abs() < 1e-13 {
        snapped
    } else {
        x
    }
}

/// Dense density matrix over `n` qubits, row-major.
#[derive(Debug, Clone)]
struct Dense {
    dim: usize,
    data: Vec<Complex<f64>>,
}

impl Dense {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex::new(0.0, 0.0); dim * dim],
        }
    }

    fn ghz(n: usize) -> Self {
        let dim = 1 << n;
        let mut m = Self::zeros(dim);
        for &r in &[0, dim - 1] {
            for &c in &[0, dim - 1] {
                *m.at_mut(r, c) = Complex::new(0.5, 0.0);
            }
        }
        m
    }

    fn at(&self, r: usize, c: usize) -> Complex<f64> {
        self.data[r * self.dim + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex<f64> {
        &mut self.data[r * self.dim + c]
    }

    /// Single-qubit operator on qubit `q` of `n` (qubit 0 most significant).
    fn embed(op: [[Complex<f64>; 2]; 2], q: usize, n: usize) -> Self {
        let dim = 1 << n;
        let shift = n - 1 - q;
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                if (r ^ c) & !(1 << shift) != 0 {
                    continue;
                }
                *m.at_mut(r, c) = op[(r >> shift) & 1][(c >> shift) & 1];
            }
        }
        m
    }

    fn mul(&self, other: &Self) -> Self {
        let mut m = Self::zeros(self.dim);
        for r in 0..self.dim {
            for k in 0..self.dim {
                let a = self.at(r, k);
                if a == Complex::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..self.dim {
                    *m.at_mut(r, c) += a * other.at(k, c);
                }
            }
        }
        m
    }

    fn add(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    fn average(&self, other: &Self) -> Self {
        let s = self.add(other);
        Self {
            dim: s.dim,
            data: s.data.into_iter().map(|x| x * 0.5).collect(),
        }
    }

    fn trace(&self) -> Complex<f64> {
        (0..self.dim).map(|i| self.at(i, i)).sum()
    }

    /// Σ_o Π_o ρ Π_o for a projective measurement of qubit `q`.
    fn dephase(&self, q: usize, n: usize, basis: Basis) -> Self {
        let mut out = Self::zeros(self.dim);
        for o in Outcome::BOTH {
            let e = basis.eigenvector::<f64>(o);
            let mut proj = [[Complex::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    proj[r][c] = e[r] * e[c].conj();
                }
            }
            let p = Self::embed(proj, q, n);
            out = out.add(&p.mul(self).mul(&p));
        }
        out
    }

    fn pauli_expectation(&self, bases: &[Basis]) -> f64 {
        let n = bases.len();
        let zero = Complex::new(0.0, 0.0);
        let one = Complex::new(1.0, 0.0);
        let i = Complex::new(0.0, 1.0);
        let mut op = self.clone();
        for (q, b) in bases.iter().enumerate() {
            let sigma = match b {
                Basis::Z => [[one, zero], [zero, -one]],
                Basis::X => [[zero, one], [one, zero]],
                Basis::Y => [[zero, -i], [i, zero]],
            };
            op = op.mul(&Self::embed(sigma, q, n));
        }
        op.trace().re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn intercept_on_product_state_is_harmless() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = StateVector::<f64>::basis_state(["q"], &[0]).unwrap();
        let before = s.clone();
        let obs = attack_intercept_resend(&mut s, "q", EveBasis::Z, &mut rng).unwrap();
        assert_eq!(obs.outcome, Outcome::Plus);
        assert_eq!(s, before);
    }

    #[test]
    fn z_attack_keeps_z_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mut s = StateVector::<f64>::ghz(3).unwrap();
            attack_intercept_resend(&mut s, "B", EveBasis::Z, &mut rng).unwrap();
            let bits: Vec<u8> = ["A", "B", "C"]
                .iter()
                .map(|l| s.measure(l, Basis::Z, &mut rng).unwrap().bit())
                .collect();
            assert!(bits.iter().all(|&b| b == bits[0]));
        }
    }

    #[test]
    fn x_attack_keeps_x_parity_breaks_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut z_mismatch = 0;
        let n = 2000;
        for _ in 0..n {
            let mut s = StateVector::<f64>::ghz(3).unwrap();
            attack_intercept_resend(&mut s, "B", EveBasis::X, &mut rng).unwrap();
            let mut x = s.clone();
            let parity = Outcome::parity(["A", "B", "C"].iter().map(|l| x.measure(l, Basis::X, &mut rng).unwrap()));
            assert_eq!(parity, 1);
            let bits: Vec<u8> = ["A", "B", "C"]
                .iter()
                .map(|l| s.measure(l, Basis::Z, &mut rng).unwrap().bit())
                .collect();
            if !bits.iter().all(|&b| b == bits[0]) {
                z_mismatch += 1;
            }
        }
        let rate = z_mismatch as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.05, "{rate}");
    }

    #[test]
    fn strategy_targets_the_right_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = StateVector::<f64>::ghz(3).unwrap();
        s.attach_qubit(TRAVELING_LABEL, 0).unwrap();
        let ir = AttackStrategy::new(AttackKind::InterceptResend(EveBasis::Z));
        assert!(ir.intercept(&mut s, TRAVELING_LABEL, &mut rng).unwrap().is_none());
        let tm = AttackStrategy::new(AttackKind::TravelingMeasureZ);
        assert!(tm.intercept(&mut s, "B", &mut rng).unwrap().is_none());
        assert!(tm.intercept(&mut s, TRAVELING_LABEL, &mut rng).unwrap().is_some());
    }

    #[test]
    fn traveling_measure_requires_traveling_qubit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = StateVector::<f64>::ghz(3).unwrap();
        assert_eq!(
            attack_traveling_measure(&mut s, &mut rng),
            Err(AdversaryError::NoTravelingQubit)
        );
    }

    #[test]
    fn mutual_information_examples() {
        let same: Vec<(u8, u8)> = (0..1000).map(|i| ((i % 2) as u8, (i % 2) as u8)).collect();
        assert!((mutual_information(&same) - 1.0).abs() < 1e-12);
        assert_eq!(mutual_information(&[]), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let indep: Vec<(u8, u8)> = (0..100_000)
            .map(|_| (rng.random_range(0..2u8), rng.random_range(0..2u8)))
            .collect();
        assert!(mutual_information(&indep) <= 0.01);
    }

    #[test]
    fn signature_table() {
        for m in 2..=6 {
            let none = expected_attack_signature(AttackKind::None, m).unwrap();
            assert_eq!((none.qber_z, none.qber_x, none.check_parity_error), (0.0, 0.0, 0.0));
        }
        let z = expected_attack_signature(AttackKind::InterceptResend(EveBasis::Z), 3).unwrap();
        assert_eq!((z.qber_z, z.qber_x, z.check_parity_error), (0.0, 0.5, 0.5));
        let x = expected_attack_signature(AttackKind::InterceptResend(EveBasis::X), 3).unwrap();
        assert_eq!((x.qber_z, x.qber_x, x.check_parity_error), (0.5, 0.0, 0.25));
        let r = expected_attack_signature(AttackKind::InterceptResend(EveBasis::RandomZX), 3).unwrap();
        assert_eq!((r.qber_z, r.qber_x), (0.25, 0.25));
        let y = expected_attack_signature(AttackKind::InterceptResend(EveBasis::Y), 4).unwrap();
        assert_eq!((y.qber_z, y.qber_x, y.check_parity_error), (0.5, 0.5, 0.25));

        assert!(matches!(
            expected_attack_signature(AttackKind::TravelingMeasureZ, 3),
            Err(AdversaryError::Unsupported(_))
        ));
        assert!(matches!(
            expected_attack_signature(AttackKind::None, 7),
            Err(AdversaryError::PartyCount(7))
        ));
    }

    #[test]
    fn duplicate_link_rejected() {
        let a = TargetedAttack {
            from: PartyId(0),
            to: PartyId(1),
            kind: AttackKind::TravelingMeasureZ,
        };
        assert!(AttackPlan::new(vec![a, a]).is_err());
        let plan = AttackPlan::new(vec![a]).unwrap();
        assert_eq!(plan.on_link(PartyId(0), PartyId(1)).kind, AttackKind::TravelingMeasureZ);
        assert_eq!(plan.on_link(PartyId(1), PartyId(2)).kind, AttackKind::None);
    }
}
