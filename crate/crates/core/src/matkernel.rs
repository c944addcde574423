//! Dense complex linear-algebra primitives.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`, stored
//! column-major, so [`vec`] is plain column stacking.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative negative-eigenvalue floor accepted by the PSD helpers.
pub const PSD_FLOOR: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Column-stacking vectorization.
pub fn vec(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product.
pub fn kron(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x.kronecker(y)
}

/// Elementwise (Hadamard) product.
pub fn hadamard(x: &CMatrix, y: &CMatrix) -> Result<CMatrix> {
    if x.shape() != y.shape() {
        return Err(Error::Dimension(format!(
            "hadamard of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(x.component_mul(y))
}

pub fn diag_matrix(v: &CVector) -> CMatrix {
    CMatrix::from_diagonal(v)
}

pub fn trace(x: &CMatrix) -> Complex64 {
    x.diagonal().sum()
}

/// Frobenius norm.
pub fn fro(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `X - X^H` in magnitude.
pub fn hermitian_defect(x: &CMatrix) -> f64 {
    if !x.is_square() {
        return f64::INFINITY;
    }
    let n = x.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(x: &CMatrix) -> bool {
    x.is_square() && hermitian_defect(x) <= 1e-12 * max_abs(x).max(1.0)
}

/// `(X + X^H) / 2`.
pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()) * cr(0.5)
}

/// `x x^H`.
pub fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eig_hermitian(x: &CMatrix) -> Result<(DVector<f64>, CMatrix)> {
    if !x.is_square() {
        return Err(Error::Dimension(format!("eig of {:?}", x.shape())));
    }
    let defect = hermitian_defect(x);
    if defect > 1e-9 * max_abs(x).max(1e-300) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }
    let n = x.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), CMatrix::zeros(0, 0)));
    }
    let eig = hermitian_part(x).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig(x: &CMatrix) -> Result<f64> {
    let (vals, _) = eig_hermitian(x)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Spectral norm of a Hermitian matrix.
pub fn spectral_norm_herm(x: &CMatrix) -> Result<f64> {
    let (vals, _) = eig_hermitian(x)?;
    Ok(vals.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Cholesky factor of a positive semidefinite matrix.
///
/// Uses a semidefinite outer-product Cholesky: pivots below
/// `shift_tol * ||X||` are treated as zero and their column dropped, so
/// rank-deficient inputs factor exactly (`L L^H = X`, `eps = 0`). If that
/// loses accuracy a diagonal shift of at most `10 * shift_tol * ||X||` is
/// applied instead.
pub fn cholesky_psd(x: &CMatrix, shift_tol: f64) -> Result<CMatrix> {
    let n = x.nrows();
    if !x.is_square() {
        return Err(Error::Dimension(format!("cholesky of {:?}", x.shape())));
    }
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let (vals, _) = eig_hermitian(x)?;
    let norm = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if norm == 0.0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let tol = shift_tol * norm;
    let lo = vals[0];
    if lo < -tol {
        return Err(Error::NotPsd { min_eig: lo, tol });
    }

    let xh = hermitian_part(x);
    let l = semidefinite_cholesky(&xh, tol);
    let err = fro(&(&l * l.adjoint() - &xh));
    if err <= 1e-11 * fro(&xh) {
        return Ok(l);
    }
    // Fall back to a shifted factorization.
    let shift = 10.0 * tol;
    let shifted = &xh + CMatrix::identity(n, n) * cr(shift);
    shifted
        .cholesky()
        .map(|ch| ch.l())
        .ok_or(Error::NotPsd { min_eig: lo, tol })
}

fn semidefinite_cholesky(x: &CMatrix, tol: f64) -> CMatrix {
    let n = x.nrows();
    let mut work = x.clone();
    let mut l = CMatrix::zeros(n, n);
    for k in 0..n {
        let pivot = work[(k, k)].re;
        if pivot <= tol {
            continue;
        }
        let root = pivot.sqrt();
        for i in k..n {
            l[(i, k)] = work[(i, k)] / root;
        }
        for j in k + 1..n {
            let ljk = l[(j, k)].conj();
            if ljk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in j..n {
                let delta = l[(i, k)] * ljk;
                work[(i, j)] -= delta;
            }
        }
    }
    l
}

/// Solves `X Y = B` for Hermitian positive definite `X`.
pub fn hermitian_solve(x: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !x.is_square() || x.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve with {:?} and {:?}",
            x.shape(),
            b.shape()
        )));
    }
    let defect = hermitian_defect(x);
    if defect > 1e-9 * max_abs(x).max(1e-300) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }
    let chol = hermitian_part(x)
        .cholesky()
        .ok_or_else(|| Error::Conditioning("matrix is not positive definite".into()))?;
    let y = chol.solve(b);
    // Normwise backward error: ill-conditioned but well-posed systems pass.
    let resid = fro(&(x * &y - b));
    let scale = fro(x) * fro(&y) + fro(b);
    if !resid.is_finite() || resid > 1e-10 * scale.max(1e-300) && scale > 0.0 {
        return Err(Error::Conditioning(format!(
            "solve residual {resid:.3e} exceeds tolerance"
        )));
    }
    Ok(y)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hermitian_inverse(x: &CMatrix) -> Result<CMatrix> {
    let n = x.nrows();
    let inv = hermitian_solve(x, &CMatrix::identity(n, n))?;
    Ok(hermitian_part(&inv))
}

/// Principal square root factor `F` with `F F^H = X` from the eigen
/// decomposition, clipping negative eigenvalues.
pub fn psd_sqrt_factor(x: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = eig_hermitian(x)?;
    let mut f = vecs;
    for (j, &lam) in vals.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn vec_of_identity_and_scalar() {
        let v = vec(&CMatrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[cr(1.0), cr(0.0), cr(0.0), cr(1.0)]);
        let z = c(1.5, -2.0);
        assert_eq!(vec(&CMatrix::from_element(1, 1, z))[0], z);
    }

    #[test]
    fn vec_trace_identity_against_double_loop() {
        let mut r = rng(1);
        let x = rand_matrix(&mut r, 3, 2);
        let mut tr = cr(0.0);
        for j in 0..2 {
            for i in 0..3 {
                tr += x[(i, j)].conj() * x[(i, j)];
            }
        }
        let v = vec(&x);
        assert!(rel(v.norm_squared(), tr.re) < 1e-12);
    }

    #[test]
    fn kron_cases() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));
        let mut r = rng(2);
        let y = rand_matrix(&mut r, 2, 3);
        let two = CMatrix::from_element(1, 1, cr(2.0));
        assert!(fro(&(kron(&two, &y) - &y * cr(2.0))) < 1e-15);
    }

    #[test]
    fn kron_trace_identity_against_direct_evaluation() {
        // Tr(Q P S K) = vec(K^T)^T (S^T kron Q) vec(P)
        let mut r = rng(3);
        let q = rand_matrix(&mut r, 2, 2);
        let p = rand_matrix(&mut r, 2, 2);
        let s = rand_matrix(&mut r, 2, 2);
        let k = rand_matrix(&mut r, 2, 2);
        let direct = trace(&(&q * &p * &s * &k));
        let lhs = (vec(&k.transpose()).transpose() * kron(&s.transpose(), &q) * vec(&p))[0];
        assert!((lhs - direct).norm() <= 1e-10 * direct.norm());
    }

    #[test]
    fn hadamard_cases() {
        let mut r = rng(4);
        let a = rand_matrix(&mut r, 3, 3);
        let ones = CMatrix::from_element(3, 3, cr(1.0));
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        assert_eq!(hadamard(&a, &CMatrix::zeros(3, 3)).unwrap(), CMatrix::zeros(3, 3));
        assert!(matches!(
            hadamard(&a, &CMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn hadamard_diagonal_sandwich_n4() {
        let mut r = rng(5);
        let v = rand_vector(&mut r, 4);
        let a = rand_matrix(&mut r, 4, 4);
        let lhs = diag_matrix(&v) * &a * diag_matrix(&v).adjoint();
        let rhs = hadamard(&a, &outer(&v)).unwrap();
        assert!(max_abs(&(lhs - rhs)) <= 1e-12);
    }

    #[test]
    fn cholesky_trivial_cases() {
        let i3 = CMatrix::identity(3, 3);
        assert!(fro(&(cholesky_psd(&i3, PSD_FLOOR).unwrap() - &i3)) < 1e-15);
        assert_eq!(cholesky_psd(&CMatrix::zeros(3, 3), PSD_FLOOR).unwrap(), CMatrix::zeros(3, 3));
    }

    #[test]
    fn cholesky_gram_reconstruction() {
        let mut r = rng(6);
        let m = rand_matrix(&mut r, 5, 4);
        let g = m.adjoint() * &m;
        let l = cholesky_psd(&g, PSD_FLOOR).unwrap();
        assert!(fro(&(&l * l.adjoint() - &g)) / fro(&g) <= 1e-10);
    }

    #[test]
    fn cholesky_rank_deficient_is_exact() {
        let mut r = rng(7);
        let m = rand_matrix(&mut r, 2, 6);
        let g = m.adjoint() * &m; // rank 2
        let l = cholesky_psd(&g, PSD_FLOOR).unwrap();
        assert!(fro(&(&l * l.adjoint() - &g)) / fro(&g) <= 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let x = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(-0.5)]));
        assert!(matches!(cholesky_psd(&x, PSD_FLOOR), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn solve_cases() {
        let mut r = rng(8);
        let b = rand_matrix(&mut r, 3, 2);
        let i3 = CMatrix::identity(3, 3);
        assert!(fro(&(hermitian_solve(&i3, &b).unwrap() - &b)) < 1e-15);
        let y = hermitian_solve(&(&i3 * cr(2.0)), &i3).unwrap();
        assert!(fro(&(y - &i3 * cr(0.5))) < 1e-15);
        let m = rand_matrix(&mut r, 4, 3);
        let x = m.adjoint() * &m + &i3 * cr(0.1);
        let y = hermitian_solve(&x, &b).unwrap();
        assert!(fro(&(&x * y - &b)) <= 1e-9 * fro(&b));
        let sing = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(0.0)]));
        assert!(hermitian_solve(&sing, &CMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn eig_cases() {
        let (v, _) = eig_hermitian(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(3.0), cr(-1.0)]));
        let (v, _) = eig_hermitian(&d).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 3.0).abs() < 1e-15);
        let mut r = rng(9);
        let x = rand_matrix(&mut r, 3, 3);
        assert!(matches!(eig_hermitian(&x), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_trace_and_residual() {
        let mut r = rng(10);
        let x = rand_hermitian(&mut r, 6);
        let (vals, vecs) = eig_hermitian(&x).unwrap();
        assert!(rel(vals.sum(), trace(&x).re) <= 1e-10);
        let lam = CMatrix::from_diagonal(&vals.map(cr));
        assert!(fro(&(&x * &vecs - &vecs * lam)) <= 1e-9 * fro(&x));
        assert!(vals.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_vec_inner_product_is_trace(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
            let mut r = rng(seed);
            let a = rand_matrix(&mut r, rows, cols);
            let b = rand_matrix(&mut r, rows, cols);
            let lhs = vec(&a).dotc(&vec(&b));
            let rhs = trace(&(a.adjoint() * &b));
            prop_assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        }

        #[test]
        fn prop_hadamard_sandwich(seed in any::<u64>(), n in 1usize..32) {
            let mut r = rng(seed);
            let v = rand_vector(&mut r, n);
            let a = rand_matrix(&mut r, n, n);
            let lhs = diag_matrix(&v) * &a * diag_matrix(&v).adjoint();
            let rhs = hadamard(&a, &outer(&v)).unwrap();
            prop_assert!(max_abs(&(lhs - rhs)) <= 1e-12 * max_abs(&a).max(1.0) * 10.0);
        }

        #[test]
        fn prop_cholesky_reconstructs_gram(seed in any::<u64>(), n in 1usize..8, k in 1usize..8) {
            let mut r = rng(seed);
            let m = rand_matrix(&mut r, k, n);
            let g = m.adjoint() * &m;
            let l = cholesky_psd(&g, PSD_FLOOR).unwrap();
            prop_assert!(fro(&(&l * l.adjoint() - &g)) <= 1e-10 * fro(&g));
        }
    }
}
