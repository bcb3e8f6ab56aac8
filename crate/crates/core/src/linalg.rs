//! Small dense complex linear algebra used per frequency bin.
//!
//! Matrices here are at most a few dozen rows (microphone counts, WPE filter
//! stacks), so everything is backed by `nalgebra` dense routines.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Replaces `m` by `(m + mᴴ) / 2`.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order. Column `k` of the returned matrix pairs with eigenvalue `k`.
pub fn hermitian_eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let mut h = m.clone();
    hermitize(&mut h);
    let eig = SymmetricEigen::try_new(h, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if vectors.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvector".into()));
    }
    Ok((values, vectors))
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Solves `a x = b` for Hermitian positive (semi)definite `a`.
///
/// Falls back to `a + δ·tr(a)·I` when the Cholesky factorization fails.
/// Returns zeros when `a` is identically zero.
pub fn solve_hermitian(a: &CMatrix, b: &CMatrix, delta: f64) -> CMatrix {
    if let Some(ch) = a.clone().cholesky() {
        return ch.solve(b);
    }
    let tr = trace_re(a);
    if tr <= 0.0 || !tr.is_finite() {
        return CMatrix::zeros(a.ncols(), b.ncols());
    }
    let mut loaded = a.clone();
    let mut load = delta.max(f64::EPSILON) * tr;
    for _ in 0..12 {
        for i in 0..loaded.nrows() {
            loaded[(i, i)] = a[(i, i)] + load;
        }
        if let Some(ch) = loaded.clone().cholesky() {
            return ch.solve(b);
        }
        load *= 10.0;
    }
    loaded.lu().solve(b).unwrap_or_else(|| CMatrix::zeros(a.ncols(), b.ncols()))
}

/// `log |det m|`, or `None` when `m` is numerically singular.
pub fn log_abs_det(m: &CMatrix) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].norm();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    acc.is_finite().then_some(acc)
}

/// Inverse of a square matrix, falling back to the SVD pseudo-inverse.
/// The flag is `true` when the fallback was used.
pub fn inverse_or_pinv(m: &CMatrix) -> (CMatrix, bool) {
    if let Some(inv) = m.clone().try_inverse() {
        if inv.iter().all(|z| z.is_finite()) {
            return (inv, false);
        }
    }
    let pinv = m
        .clone()
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| CMatrix::zeros(m.ncols(), m.nrows()));
    (pinv, true)
}

/// `aᴴ b` for complex vectors given as slices or columns.
pub fn inner<'a, I, J>(a: I, b: J) -> Complex64
where
    I: IntoIterator<Item = &'a Complex64>,
    J: IntoIterator<Item = &'a Complex64>,
{
    a.into_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr<'a, I: IntoIterator<Item = &'a Complex64>>(a: I) -> f64 {
    a.into_iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_sorts_ascending_and_reconstructs() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[c(4.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(1.0, -1.0), c(3.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(1.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigh(&m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::from_diagonal(&CVector::from_iterator(3, vals.iter().map(|&v| c(v, 0.0))));
        let back = &vecs * d * vecs.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 3.0)]));
        assert!((log_abs_det(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert!(log_abs_det(&CMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn solve_singular_falls_back_to_loading() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let b = CMatrix::from_row_slice(2, 1, &[c(2.0, 0.0), c(2.0, 0.0)]);
        let x = solve_hermitian(&a, &b, 1e-10);
        assert!(((&a * &x) - &b).norm() < 1e-6);
        let zero = solve_hermitian(&CMatrix::zeros(2, 2), &b, 1e-10);
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn pinv_fallback_flagged() {
        let (_, used) = inverse_or_pinv(&CMatrix::identity(2, 2));
        assert!(!used);
        let (p, used) = inverse_or_pinv(&CMatrix::zeros(2, 2));
        assert!(used);
        assert_eq!(p.norm(), 0.0);
    }
}
