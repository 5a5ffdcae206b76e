//! Small dense helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix};

/// Ridge added to a Hermitian system that fails to factor.
pub const REGULARIZATION: f64 = 1e-12;

/// Replaces `m` by `(m + mᴴ) / 2`.
pub fn hermitize<T: ComplexField + Copy>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::from_real(nalgebra::convert(0.5));
    for i in 0..n {
        for j in i..n {
            let v = (m[(i, j)] + m[(j, i)].conjugate()) * half;
            m[(i, j)] = v;
            m[(j, i)] = v.conjugate();
        }
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut h = m.clone();
    hermitize(&mut h);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
///
/// Falls back to adding [`REGULARIZATION`] to the diagonal and then to LU.
/// The boolean is true when the plain Cholesky factorisation failed.
pub fn solve_hermitian<T: ComplexField<RealField = f64> + Copy>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> (DMatrix<T>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        return (ch.solve(b), false);
    }
    let n = a.nrows();
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += T::from_real(REGULARIZATION);
    }
    if let Some(ch) = reg.clone().cholesky() {
        return (ch.solve(b), true);
    }
    let x = reg
        .lu()
        .solve(b)
        .unwrap_or_else(|| DMatrix::from_element(b.nrows(), b.ncols(), T::zero()));
    (x, true)
}
