//! Eigenvalues of real, non-symmetric matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// All eigenvalues of `m`, repeated by algebraic multiplicity.
///
/// The real Schur path can emit NaN from a 2×2 block whose discriminant rounds to a tiny
/// negative number (near-repeated real eigenvalues); those cases are redone in complex arithmetic.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let fast = m.complex_eigenvalues();
    if fast.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return fast.iter().copied().collect();
    }
    let c = m.map(|x| Complex64::new(x, 0.0));
    c.schur()
        .eigenvalues()
        .expect("complex Schur form is triangular")
        .iter()
        .copied()
        .collect()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
