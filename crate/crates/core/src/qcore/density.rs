use num_complex::Complex;

use super::Real;

/// Reduced state of a single qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2<T: Real = f64> {
    pub entries: [[Complex<T>; 2]; 2],
}

impl<T: Real> DensityMatrix2<T> {
    /// I/2.
    pub fn maximally_mixed() -> Self {
        let half = Complex::new(T::lit(0.5), T::zero());
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            entries: [[half, zero], [zero, half]],
        }
    }

    /// |v⟩⟨v| for a (normalized) vector.
    pub fn projector(v: [Complex<T>; 2]) -> Self {
        let mut entries = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for (r, row) in entries.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = v[r] * v[c].conj();
            }
        }
        Self { entries }
    }

    pub fn trace(&self) -> Complex<T> {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        let e = &self.entries;
        e[0][0].im.abs() <= tol
            && e[1][1].im.abs() <= tol
            && (e[0][1] - e[1][0].conj()).norm() <= tol
    }

    /// Eigenvalues in ascending order, using only the Hermitian part.
    pub fn eigenvalues(&self) -> [T; 2] {
        let e = &self.entries;
        let a = e[0][0].re;
        let d = e[1][1].re;
        let b = (e[0][1] + e[1][0].conj()) * T::lit(0.5);
        let mid = (a + d) * T::lit(0.5);
        let half_gap = ((a - d) * T::lit(0.5)).hypot(b.norm());
        [mid - half_gap, mid + half_gap]
    }

    pub fn purity(&self) -> T {
        // Tr(ρ²) = Σ |ρ_rc|² for Hermitian ρ.
        self.entries.iter().flatten().fold(T::zero(), |acc, x| acc + x.norm_sqr())
    }

    /// Hermitian, unit trace, and positive semidefinite within `tol`.
    pub fn is_valid(&self, tol: T) -> bool {
        let tr = self.trace();
        self.is_hermitian(tol)
            && (tr.re - T::one()).abs() <= tol
            && tr.im.abs() <= tol
            && self.eigenvalues()[0] >= -tol
    }

    /// Largest entrywise modulus of the difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut m = T::zero();
        for r in 0..2 {
            for c in 0..2 {
                m = m.max((self.entries[r][c] - other.entries[r][c]).norm());
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{Basis, Outcome};

    #[test]
    fn mixed_state_properties() {
        let rho = DensityMatrix2::<f64>::maximally_mixed();
        assert!(rho.is_valid(1e-12));
        assert!((rho.purity() - 0.5).abs() < 1e-15);
        assert_eq!(rho.eigenvalues(), [0.5, 0.5]);
    }

    #[test]
    fn projector_is_pure() {
        for b in Basis::ALL {
            for o in Outcome::BOTH {
                let rho = DensityMatrix2::<f64>::projector(b.eigenvector(o));
                assert!(rho.is_valid(1e-12));
                assert!((rho.purity() - 1.0).abs() < 1e-12);
                let ev = rho.eigenvalues();
                assert!(ev[0].abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut rho = DensityMatrix2::<f64>::maximally_mixed();
        rho.entries[0][1] = Complex::new(0.1, 0.0);
        assert!(!rho.is_valid(1e-10));
    }
}
