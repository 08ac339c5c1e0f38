//! Small dense complex matrix kernel.
//!
//! Everything in this crate is at most a few tens of rows wide, so the kernel
//! favours exactness of invariants over speed: the inverse square root goes
//! through a full Hermitian eigendecomposition and determinants through LU with
//! partial pivoting.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance used by every numeric verdict in the crate.
pub const REL_TOL: f64 = 1e-9;
/// Absolute floor below which magnitudes are treated as exact zeros.
pub const ABS_FLOOR: f64 = 1e-12;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The single zero-test predicate: `|z| < 1e-9 * (1 + scale)` where `scale` is
/// the largest input magnitude that fed the computation.
#[inline]
pub fn is_zero(magnitude: f64, scale: f64) -> bool {
    magnitude < REL_TOL * (1.0 + scale)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|M - M^H|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    is_zero(hermitian_defect(m), max_abs(m))
}

/// Largest off-diagonal magnitude.
pub fn off_diagonal_max(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, row) in m.row_iter().enumerate() {
        for (c, z) in row.iter().enumerate() {
            if r != c {
                worst = worst.max(z.norm());
            }
        }
    }
    worst
}

/// Frobenius norm of the off-diagonal part.
pub fn off_diagonal_frobenius(m: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for (r, row) in m.row_iter().enumerate() {
        for (c, z) in row.iter().enumerate() {
            if r != c {
                acc += z.norm_sqr();
            }
        }
    }
    acc.sqrt()
}

pub fn approx_eq(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}

/// Determinant via LU with partial pivoting.
pub fn det(m: &CMatrix) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(m.clone().lu().determinant())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if !is_hermitian(m) {
        return Err(Error::NotHermitian(hermitian_defect(m)));
    }
    // symmetrise so rounding noise below the tolerance does not leak in
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `M^{-1/2}` for Hermitian positive-definite `M`.
///
/// The result is Hermitian and satisfies `X M X = I`. A non-positive smallest
/// eigenvalue is reported as [`Error::NotPositiveDefinite`]; this is how a
/// singular noise covariance or Γ surfaces to callers.
pub fn inv_sqrt_pd(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(m)?;
    let smallest = values.first().copied().unwrap_or(1.0);
    let largest = values.last().copied().unwrap_or(1.0);
    if smallest <= ABS_FLOOR * largest.abs().max(1.0) {
        return Err(Error::NotPositiveDefinite(smallest));
    }
    let n = m.nrows();
    let scaled = CMatrix::from_fn(n, n, |r, c| vectors[(r, c)] / values[c].sqrt());
    let x = &scaled * vectors.adjoint();
    Ok((&x + x.adjoint()).scale(0.5))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigen(m)?.0.first().copied().unwrap_or(0.0))
}

/// Numerical rank from singular values.
pub fn rank(m: &CMatrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| !is_zero(s, top)).count()
}

/// Element-wise conjugate.
pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

pub fn conj_vec(v: &CVector) -> CVector {
    v.map(|z| z.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_pd(n: usize, rng: &mut impl Rng) -> CMatrix {
        let a = random(n, rng);
        &a * a.adjoint() + CMatrix::identity(n, n)
    }

    #[test]
    fn inv_sqrt_identity_and_diagonal() {
        let id = CMatrix::identity(3, 3);
        assert!(approx_eq(&inv_sqrt_pd(&id).unwrap(), &id, 1e-14));
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(4.0, 0.0), c(9.0, 0.0)]));
        let x = inv_sqrt_pd(&d).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.5, 0.0), c(1.0 / 3.0, 0.0)]));
        assert!(approx_eq(&x, &want, 1e-14));
    }

    #[test]
    fn inv_sqrt_whitens_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..8 {
            let m = random_pd(n, &mut rng);
            let x = inv_sqrt_pd(&m).unwrap();
            let prod = &x * &m * &x;
            assert!(approx_eq(&prod, &CMatrix::identity(n, n), 1e-9 * (1.0 + max_abs(&m))));
            assert!(is_hermitian(&x));
            // commutes with M
            assert!(approx_eq(&(&x * &m), &(&m * &x), 1e-9 * (1.0 + max_abs(&m))));
        }
    }

    #[test]
    fn inv_sqrt_rejects_bad_input() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(inv_sqrt_pd(&m), Err(Error::NotHermitian(_))));
        let singular = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert!(matches!(inv_sqrt_pd(&singular), Err(Error::NotPositiveDefinite(_))));
        let indefinite = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-2.0, 0.0)]));
        assert!(matches!(inv_sqrt_pd(&indefinite), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn det_small_cases() {
        assert_eq!(det(&CMatrix::identity(3, 3)).unwrap(), c(1.0, 0.0));
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(2.0, 0.0), c(5.0, 0.0)]));
        assert!((det(&d).unwrap() - c(10.0, 0.0)).norm() < 1e-14);
        assert!(matches!(det(&CMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn det_inverse_and_product_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random(4, &mut rng);
            let inv = m.clone().try_inverse().unwrap();
            let p = det(&m).unwrap() * det(&inv).unwrap();
            assert!((p - c(1.0, 0.0)).norm() < 1e-9);
            let b = random(4, &mut rng);
            let lhs = det(&(&m * &b)).unwrap();
            let rhs = det(&m).unwrap() * det(&b).unwrap();
            assert!((lhs - rhs).norm() <= 1e-8 * rhs.norm().max(1e-300));
        }
    }

    #[test]
    fn adjoint_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = CMatrix::from_fn(3, 5, |_, _| c(rng.random(), rng.random()));
        assert_eq!(m.adjoint().adjoint(), m);
    }

    #[test]
    fn rank_detects_deficiency() {
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 1)] = c(0.0, 2.0);
        assert_eq!(rank(&m), 2);
        assert_eq!(rank(&CMatrix::identity(4, 4)), 4);
    }
}
