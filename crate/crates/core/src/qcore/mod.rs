//! Exact state-vector engine.
//!
//! A [`StateVector`] holds the pure state of a small labeled register. Label
//! position 0 is the most significant bit of the basis-state index, so the
//! GHZ state over `A, B, C` has its two non-zero amplitudes at indices 0 and 7.
//!
//! Measurements are projective in one of the three Pauli bases. A measured
//! qubit is left in the observed eigenvector and can then be removed from the
//! register exactly, which keeps protocol registers at a handful of qubits.

mod density;
mod scalar;
mod state;

pub use density::DensityMatrix2;
pub use scalar::Real;
pub use state::StateVector;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register the engine will build.
pub const MAX_QUBITS: usize = 20;

/// Label of the message-carrying traveling qubit.
pub const TRAVELING_LABEL: &str = "T";

/// Label of a receiver's auxiliary qubit.
pub const ANCILLA_LABEL: &str = "b";

/// Conferee qubit labels: `A`, `B`, `C`, ... in conferee order.
///
/// Limited to 18 conferees so labels never collide with [`TRAVELING_LABEL`].
pub const MAX_PARTIES: usize = 18;

pub fn party_label(index: usize) -> String {
    assert!(index < MAX_PARTIES, "party index {index} out of range");
    char::from(b'A' + index as u8).to_string()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcoreError {
    #[error("a register needs at least one qubit")]
    NoQubits,
    #[error("register of {0} qubits exceeds the {MAX_QUBITS}-qubit limit")]
    TooManyQubits(usize),
    #[error("duplicate qubit label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown qubit label `{0}`")]
    UnknownLabel(String),
    #[error("control and target are both `{0}`")]
    SameControlTarget(String),
    #[error("expected {expected} amplitudes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("amplitudes are not finite")]
    NonFinite,
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("label sets differ: {0:?} vs {1:?}")]
    LabelMismatch(Vec<String>, Vec<String>),
    #[error("qubit `{0}` is entangled with the rest of the register")]
    Entangled(String),
    #[error("bit value must be 0 or 1, got {0}")]
    BadBit(u8),
}

pub type Result<T, E = QcoreError> = std::result::Result<T, E>;

/// Single-qubit measuring basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    /// Eigenvector for `outcome` as `(⟨0|e⟩, ⟨1|e⟩)`.
    ///
    /// Z: |0⟩, |1⟩. X: (|0⟩ ± |1⟩)/√2. Y: (|0⟩ ± i|1⟩)/√2.
    pub fn eigenvector<T: Real>(self, outcome: Outcome) -> [Complex<T>; 2] {
        let zero = Complex::new(T::zero(), T::zero());
        let one = Complex::new(T::one(), T::zero());
        let h = T::FRAC_1_SQRT_2();
        let sign = match outcome {
            Outcome::Plus => T::one(),
            Outcome::Minus => -T::one(),
        };
        match self {
            Basis::Z => match outcome {
                Outcome::Plus => [one, zero],
                Outcome::Minus => [zero, one],
            },
            Basis::X => [Complex::new(h, T::zero()), Complex::new(sign * h, T::zero())],
            Basis::Y => [Complex::new(h, T::zero()), Complex::new(T::zero(), sign * h)],
        }
    }
}

/// Measurement outcome. `Plus` is eigenvalue +1 and bit 0, `Minus` is −1 and bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Outcome::Plus),
            1 => Ok(Outcome::Minus),
            b => Err(QcoreError::BadBit(b)),
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    #[inline]
    pub fn eigenvalue(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    /// Product of eigenvalues, as ±1.
    pub fn parity<I: IntoIterator<Item = Outcome>>(outcomes: I) -> i8 {
        outcomes.into_iter().map(Outcome::eigenvalue).product()
    }
}

/// Pauli operators used for depolarizing noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
}
