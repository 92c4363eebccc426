use std::collections::HashSet;

use num_complex::Complex;
use rand::Rng;

use super::{party_label, Basis, DensityMatrix2, Outcome, Pauli, QcoreError, Real, Result, MAX_QUBITS};

/// Pure state of a labeled register.
///
/// Amplitude `i` belongs to the basis state whose bits, read from label 0
/// (most significant) to label `n-1` (least significant), spell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real = f64> {
    labels: Vec<String>,
    amplitudes: Vec<Complex<T>>,
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

fn check_labels(labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(QcoreError::NoQubits);
    }
    if labels.len() > MAX_QUBITS {
        return Err(QcoreError::TooManyQubits(labels.len()));
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(QcoreError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

impl<T: Real> StateVector<T> {
    /// Build a state from explicit amplitudes. The vector must be finite,
    /// of length `2^n`, and normalized within [`Real::state_tolerance`].
    pub fn from_amplitudes<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        amplitudes: Vec<Complex<T>>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        check_labels(&labels)?;
        let expected = 1usize << labels.len();
        if amplitudes.len() != expected {
            return Err(QcoreError::BadLength {
                expected,
                actual: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QcoreError::NonFinite);
        }
        let state = Self { labels, amplitudes };
        let n2 = state.norm_sqr();
        if (n2 - T::one()).abs() > T::state_tolerance() {
            return Err(QcoreError::NotNormalized(n2.as_f64()));
        }
        Ok(state)
    }

    /// Computational basis state `|bits⟩`.
    pub fn basis_state<S: Into<String>>(labels: impl IntoIterator<Item = S>, bits: &[u8]) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        check_labels(&labels)?;
        if bits.len() != labels.len() {
            return Err(QcoreError::BadLength {
                expected: labels.len(),
                actual: bits.len(),
            });
        }
        let mut index = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(QcoreError::BadBit(b));
            }
            index = (index << 1) | b as usize;
        }
        let mut amplitudes = vec![czero(); 1 << labels.len()];
        amplitudes[index] = Complex::new(T::one(), T::zero());
        Ok(Self { labels, amplitudes })
    }

    /// (|0…0⟩ + |1…1⟩)/√2 over conferee labels `A, B, C, …`.
    pub fn ghz(parties: usize) -> Result<Self> {
        if parties == 0 {
            return Err(QcoreError::NoQubits);
        }
        if parties > super::MAX_PARTIES {
            return Err(QcoreError::TooManyQubits(parties));
        }
        Self::ghz_with_labels((0..parties).map(party_label))
    }

    pub fn ghz_with_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        let mut amplitudes = vec![czero(); dim];
        let h = Complex::new(T::FRAC_1_SQRT_2(), T::zero());
        amplitudes[0] = h;
        amplitudes[dim - 1] = h;
        Ok(Self { labels, amplitudes })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QcoreError::UnknownLabel(label.to_string()))
    }

    #[inline]
    fn mask(&self, pos: usize) -> usize {
        1 << (self.labels.len() - 1 - pos)
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    /// Append a qubit in `|bit⟩` as the new least significant position.
    pub fn attach_qubit(&mut self, label: impl Into<String>, bit: u8) -> Result<()> {
        let label = label.into();
        if bit > 1 {
            return Err(QcoreError::BadBit(bit));
        }
        if self.contains(&label) {
            return Err(QcoreError::DuplicateLabel(label));
        }
        if self.labels.len() + 1 > MAX_QUBITS {
            return Err(QcoreError::TooManyQubits(self.labels.len() + 1));
        }
        let mut next = vec![czero(); self.amplitudes.len() * 2];
        for (i, a) in self.amplitudes.iter().enumerate() {
            next[(i << 1) | bit as usize] = *a;
        }
        self.amplitudes = next;
        self.labels.push(label);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: &str, target: &str) -> Result<()> {
        if control == target {
            return Err(QcoreError::SameControlTarget(control.to_string()));
        }
        let cm = self.mask(self.position(control)?);
        let tm = self.mask(self.position(target)?);
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
        Ok(())
    }

    pub fn apply_pauli(&mut self, label: &str, pauli: Pauli) -> Result<()> {
        let m = self.mask(self.position(label)?);
        let i_unit = Complex::new(T::zero(), T::one());
        for i0 in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let i1 = i0 | m;
            let (a0, a1) = (self.amplitudes[i0], self.amplitudes[i1]);
            let (b0, b1) = match pauli {
                Pauli::X => (a1, a0),
                Pauli::Z => (a0, -a1),
                // Y = [[0, -i], [i, 0]]
                Pauli::Y => (-i_unit * a1, i_unit * a0),
            };
            self.amplitudes[i0] = b0;
            self.amplitudes[i1] = b1;
        }
        Ok(())
    }

    /// Components of the qubit at `pos` along eigenvector `e`, indexed by the
    /// remaining bits in pair order.
    fn pair_projections(&self, pos: usize, e: &[Complex<T>; 2]) -> impl Iterator<Item = (usize, Complex<T>)> + '_ {
        let m = self.mask(pos);
        let (e0, e1) = (e[0].conj(), e[1].conj());
        (0..self.amplitudes.len())
            .filter(move |i| i & m == 0)
            .map(move |i0| (i0, e0 * self.amplitudes[i0] + e1 * self.amplitudes[i0 | m]))
    }

    /// Born probabilities `[P(+1), P(−1)]` for measuring `label` in `basis`.
    pub fn outcome_probabilities(&self, label: &str, basis: Basis) -> Result<[T; 2]> {
        let pos = self.position(label)?;
        let mut probs = [T::zero(); 2];
        for (k, o) in Outcome::BOTH.into_iter().enumerate() {
            let e = basis.eigenvector::<T>(o);
            probs[k] = self
                .pair_projections(pos, &e)
                .fold(T::zero(), |acc, (_, c)| acc + c.norm_sqr());
        }
        Ok(probs)
    }

    /// Project `label` onto the eigenvector of `outcome` and renormalize.
    /// Returns the probability of that outcome; a zero-probability outcome
    /// leaves the state untouched and returns zero.
    pub fn collapse(&mut self, label: &str, basis: Basis, outcome: Outcome) -> Result<T> {
        let pos = self.position(label)?;
        let m = self.mask(pos);
        let e = basis.eigenvector::<T>(outcome);
        let comps: Vec<(usize, Complex<T>)> = self.pair_projections(pos, &e).collect();
        let p = comps.iter().fold(T::zero(), |acc, (_, c)| acc + c.norm_sqr());
        if p <= T::zero() {
            return Ok(T::zero());
        }
        let scale = T::one() / p.sqrt();
        for (i0, c) in comps {
            self.amplitudes[i0] = e[0] * c * scale;
            self.amplitudes[i0 | m] = e[1] * c * scale;
        }
        Ok(p)
    }

    /// Projective measurement; the qubit stays in the register, collapsed.
    pub fn measure<R: Rng + ?Sized>(&mut self, label: &str, basis: Basis, rng: &mut R) -> Result<Outcome> {
        let [p_plus, p_minus] = self.outcome_probabilities(label, basis)?;
        let threshold = (p_plus / (p_plus + p_minus)).as_f64();
        let outcome = if rng.random::<f64>() < threshold {
            Outcome::Plus
        } else {
            Outcome::Minus
        };
        self.collapse(label, basis, outcome)?;
        Ok(outcome)
    }

    /// Measure and then remove the collapsed qubit from the register.
    pub fn measure_and_discard<R: Rng + ?Sized>(
        &mut self,
        label: &str,
        basis: Basis,
        rng: &mut R,
    ) -> Result<Outcome> {
        let outcome = self.measure(label, basis, rng)?;
        let pos = self.position(label)?;
        self.remove_in_state(pos, &basis.eigenvector(outcome));
        Ok(outcome)
    }

    /// Remove a qubit that is in a product state with the rest.
    pub fn discard_qubit(&mut self, label: &str) -> Result<()> {
        let pos = self.position(label)?;
        let rho = self.reduced_density(label)?;
        if (rho.purity() - T::one()).abs() > T::state_tolerance() {
            return Err(QcoreError::Entangled(label.to_string()));
        }
        // ρ = |e⟩⟨e|: the heavier column is e up to a phase.
        let col = if rho.entries[0][0].re >= rho.entries[1][1].re { 0 } else { 1 };
        let v = [rho.entries[0][col], rho.entries[1][col]];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        let e = [v[0] / n, v[1] / n];
        self.remove_in_state(pos, &e);
        Ok(())
    }

    fn remove_in_state(&mut self, pos: usize, e: &[Complex<T>; 2]) {
        // Removing the last qubit leaves a zero-qubit register holding a phase.
        let next: Vec<Complex<T>> = self.pair_projections(pos, e).map(|(_, c)| c).collect();
        self.amplitudes = next;
        self.labels.remove(pos);
    }

    /// Partial trace of |ψ⟩⟨ψ| down to `label`.
    pub fn reduced_density(&self, label: &str) -> Result<DensityMatrix2<T>> {
        let m = self.mask(self.position(label)?);
        let mut entries = [[czero::<T>(); 2]; 2];
        for i0 in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let a = [self.amplitudes[i0], self.amplitudes[i0 | m]];
            for r in 0..2 {
                for c in 0..2 {
                    entries[r][c] = entries[r][c] + a[r] * a[c].conj();
                }
            }
        }
        Ok(DensityMatrix2 { entries })
    }

    /// Same state with qubits permuted into `order`.
    pub fn reordered<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        let order: Vec<String> = order.iter().map(|s| s.as_ref().to_string()).collect();
        self.same_label_set(&order)?;
        let n = self.labels.len();
        let src_pos: Vec<usize> = order.iter().map(|l| self.position(l)).collect::<Result<_>>()?;
        let mut amplitudes = vec![czero(); self.amplitudes.len()];
        for (j, slot) in amplitudes.iter_mut().enumerate() {
            let mut i = 0usize;
            for (new_pos, &old_pos) in src_pos.iter().enumerate() {
                if j & (1 << (n - 1 - new_pos)) != 0 {
                    i |= 1 << (n - 1 - old_pos);
                }
            }
            *slot = self.amplitudes[i];
        }
        Ok(Self {
            labels: order,
            amplitudes,
        })
    }

    fn same_label_set(&self, other: &[String]) -> Result<()> {
        let a: HashSet<&str> = self.labels.iter().map(String::as_str).collect();
        let b: HashSet<&str> = other.iter().map(String::as_str).collect();
        if a != b || other.len() != self.labels.len() {
            return Err(QcoreError::LabelMismatch(self.labels.clone(), other.to_vec()));
        }
        Ok(())
    }

    /// ⟨self|other⟩, matching qubits by label.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        let aligned = other.reordered(&self.labels)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&aligned.amplitudes)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b))
    }

    /// |⟨reference|self⟩|², insensitive to label order and global phase.
    pub fn fidelity(&self, reference: &Self) -> Result<T> {
        Ok(reference.inner(self)?.norm_sqr())
    }

    /// ⟨ψ|σ₁⊗σ₂⊗…|ψ⟩ for the listed single-qubit Paulis (identity elsewhere).
    pub fn pauli_expectation(&self, ops: &[(&str, Basis)]) -> Result<T> {
        let mut flip = 0usize;
        let mut zmask = 0usize;
        let mut ymask = 0usize;
        for &(label, basis) in ops {
            let m = self.mask(self.position(label)?);
            if (flip | zmask) & m != 0 {
                return Err(QcoreError::DuplicateLabel(label.to_string()));
            }
            match basis {
                Basis::Z => zmask |= m,
                Basis::X => flip |= m,
                Basis::Y => {
                    flip |= m;
                    ymask |= m;
                }
            }
        }
        // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩: phase i^{#Y} · (−1)^{#Y bits set}.
        let i_pow = match ymask.count_ones() % 4 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        };
        let mut acc = czero::<T>();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let negative = ((i & zmask).count_ones() + (i & ymask).count_ones()) % 2 == 1;
            let term = self.amplitudes[i ^ flip].conj() * a;
            acc = if negative { acc - term } else { acc + term };
        }
        Ok((acc * i_pow).re)
    }
}
