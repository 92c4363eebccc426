//! GHZ-state conference toolkit.
//!
//! Two ways for `M` conferees to talk privately:
//!
//! * [`keyconf`]: all conferees measure shared GHZ states in biased Z/X
//!   bases, sift, sample for errors and keep the all-Z outcomes as a common
//!   key, then talk over a classical one-time pad.
//! * [`qcrypt`]: the conferees keep the GHZ systems themselves as a reusable
//!   quantum key and encrypt each message bit onto a traveling qubit with a
//!   CNOT from the sender's key qubit.
//!
//! [`qcore`] is the exact state-vector engine, generic over the scalar type
//! (`f32` or `f64`); the aliases below pin the common choices.

pub mod adversary;
pub mod channel;
pub mod harness;
pub mod keyconf;
pub mod qcore;
pub mod qcrypt;

pub use qcore::{Basis, DensityMatrix2, Outcome, Real, StateVector};

pub type StateVector64 = qcore::StateVector<f64>;
pub type StateVector32 = qcore::StateVector<f32>;
pub type DensityMatrix64 = qcore::DensityMatrix2<f64>;
pub type DensityMatrix32 = qcore::DensityMatrix2<f32>;
