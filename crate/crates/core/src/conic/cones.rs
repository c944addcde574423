//! Cone primitives for the interior-point method: the nonnegative orthant,
//! second-order cones and real or complex PSD cones, with Nesterov-Todd
//! scalings, Jordan products and step lengths.
//!
//! PSD cone elements are packed isometrically: the diagonal, then
//! `sqrt(2) Re X_ab` for `a < b`, then (complex cones only) `sqrt(2) Im X_ab`,
//! so the Euclidean inner product of packed vectors equals `Tr(X Y)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkernel::{c, cr, CMatrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Nonneg(usize),
    Soc(usize),
    Psd { n: usize, complex: bool },
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Nonneg(d) | Cone::Soc(d) => d,
            Cone::Psd { n, complex: true } => n * n,
            Cone::Psd { n, complex: false } => n * (n + 1) / 2,
        }
    }

    /// Barrier degree (rank of the Jordan algebra).
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Nonneg(d) => d,
            Cone::Soc(d) => usize::from(d > 0),
            Cone::Psd { n, .. } => n,
        }
    }

    pub fn identity(&self, out: &mut [f64]) {
        out.fill(0.0);
        match *self {
            Cone::Nonneg(_) => out.fill(1.0),
            Cone::Soc(d) => {
                if d > 0 {
                    out[0] = 1.0;
                }
            }
            Cone::Psd { n, .. } => out[..n].fill(1.0),
        }
    }

    /// Largest `t` such that `u - t e` stays in the cone (negative when `u` is
    /// outside).
    pub fn interior_margin(&self, u: &[f64]) -> f64 {
        match *self {
            Cone::Nonneg(_) => u.iter().copied().fold(f64::INFINITY, f64::min),
            Cone::Soc(_) => u[0] - norm(&u[1..]),
            Cone::Psd { n, complex } => {
                let m = unpack(n, complex, u);
                m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Jordan product `u o v`.
    pub fn jprod(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            Cone::Nonneg(_) => {
                for i in 0..u.len() {
                    out[i] = u[i] * v[i];
                }
            }
            Cone::Soc(_) => {
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
            }
            Cone::Psd { n, complex } => {
                let a = unpack(n, complex, u);
                let b = unpack(n, complex, v);
                let p = (&a * &b + &b * &a) * cr(0.5);
                pack(n, complex, &p, out);
            }
        }
    }

    /// Solves `lambda o x = r` for `x`, where `lambda` is a scaled point as
    /// returned by [`Scaling::new`] (diagonal for PSD cones).
    pub fn jdiv(&self, lambda: &[f64], r: &[f64], out: &mut [f64]) {
        match *self {
            Cone::Nonneg(_) => {
                for i in 0..r.len() {
                    out[i] = r[i] / lambda[i];
                }
            }
            Cone::Soc(_) => {
                let l0 = lambda[0];
                let det = l0 * l0 - dot(&lambda[1..], &lambda[1..]);
                let x0 = (l0 * r[0] - dot(&lambda[1..], &r[1..])) / det;
                out[0] = x0;
                for i in 1..r.len() {
                    out[i] = (r[i] - x0 * lambda[i]) / l0;
                }
            }
            Cone::Psd { n, complex } => {
                let rm = unpack(n, complex, r);
                let xm = CMatrix::from_fn(n, n, |i, j| rm[(i, j)] * (2.0 / (lambda[i] + lambda[j])));
                pack(n, complex, &xm, out);
            }
        }
    }

    /// Largest step `alpha` with `lambda + alpha d` in the cone, for a scaled
    /// point `lambda` (diagonal for PSD cones). Infinite when unbounded.
    pub fn max_step(&self, lambda: &[f64], d: &[f64]) -> f64 {
        match *self {
            Cone::Nonneg(_) => lambda
                .iter()
                .zip(d)
                .filter(|(_, &di)| di < 0.0)
                .map(|(&li, &di)| -li / di)
                .fold(f64::INFINITY, f64::min),
            Cone::Soc(_) => soc_max_step(lambda, d),
            Cone::Psd { n, complex } => {
                let dm = unpack(n, complex, d);
                let scaled = CMatrix::from_fn(n, n, |i, j| {
                    dm[(i, j)] / (lambda[i].sqrt() * lambda[j].sqrt())
                });
                let lo = scaled
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if lo < 0.0 {
                    -1.0 / lo
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn soc_max_step(l: &[f64], d: &[f64]) -> f64 {
    // f(a) = (l0 + a d0)^2 - ||l1 + a d1||^2 = qa a^2 + 2 qb a + qc
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = l[0] * d[0] - dot(&l[1..], &d[1..]);
    let qc = (l[0] * l[0] - dot(&l[1..], &l[1..])).max(0.0);
    let mut best = f64::INFINITY;
    if d[0] < 0.0 {
        best = -l[0] / d[0];
    }
    let scale = qa.abs().max(qb.abs()).max(qc);
    if scale == 0.0 {
        return best;
    }
    if qa.abs() <= 1e-15 * scale {
        if qb < 0.0 {
            best = best.min(-qc / (2.0 * qb));
        }
        return best;
    }
    let disc = qb * qb - qa * qc;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    // Numerically stable roots.
    let q = -(qb + qb.signum() * sq);
    let roots = if q != 0.0 { [q / qa, qc / q] } else { [-qb / qa, -qb / qa] };
    for r in roots {
        if r > 0.0 {
            best = best.min(r);
        }
    }
    best
}

/// Packs the Hermitian part of `x` into `out`.
pub fn pack(n: usize, complex: bool, x: &CMatrix, out: &mut [f64]) {
    for i in 0..n {
        out[i] = x[(i, i)].re;
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            let v = (x[(a, b)] + x[(b, a)].conj()) * 0.5;
            out[n + k] = SQRT2 * v.re;
            if complex {
                out[n + pairs + k] = SQRT2 * v.im;
            }
            k += 1;
        }
    }
}

pub fn unpack(n: usize, complex: bool, u: &[f64]) -> CMatrix {
    let mut x = CMatrix::zeros(n, n);
    for i in 0..n {
        x[(i, i)] = cr(u[i]);
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            let re = u[n + k] / SQRT2;
            let im = if complex { u[n + pairs + k] / SQRT2 } else { 0.0 };
            x[(a, b)] = c(re, im);
            x[(b, a)] = c(re, -im);
            k += 1;
        }
    }
    x
}

/// Nesterov-Todd scaling `W` of one cone at the pair `(s, z)`, with
/// `W z = W^{-T} s = lambda`.
#[derive(Debug, Clone)]
pub enum Scaling {
    Nonneg { w: Vec<f64> },
    Soc { beta: f64, v: DVector<f64> },
    Psd { n: usize, complex: bool, r: CMatrix, rinv: CMatrix },
}

impl Scaling {
    /// Computes the scaling and the scaled point `lambda`.
    pub fn new(cone: &Cone, s: &[f64], z: &[f64]) -> Result<(Scaling, Vec<f64>)> {
        match *cone {
            Cone::Nonneg(_) => {
                if s.iter().chain(z).any(|&v| v <= 0.0 || !v.is_finite()) {
                    return Err(Error::Solver("iterate left the nonnegative orthant".into()));
                }
                let w = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                Ok((Scaling::Nonneg { w }, lambda))
            }
            Cone::Soc(d) => {
                let sjs = s[0] * s[0] - dot(&s[1..], &s[1..]);
                let zjz = z[0] * z[0] - dot(&z[1..], &z[1..]);
                if !(sjs > 0.0 && zjz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return Err(Error::Solver("iterate left a second-order cone".into()));
                }
                let (sn, zn) = (sjs.sqrt(), zjz.sqrt());
                let beta = (sn / zn).sqrt();
                let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
                let mut wb = vec![0.0; d];
                wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                for i in 1..d {
                    wb[i] = (sb[i] - zb[i]) / (2.0 * gamma);
                }
                let denom = (2.0 * (wb[0] + 1.0)).sqrt();
                let mut v = DVector::from_vec(wb);
                v[0] += 1.0;
                v /= denom;
                let sc = Scaling::Soc { beta, v };
                let mut lambda = vec![0.0; d];
                sc.apply_w(z, &mut lambda);
                Ok((sc, lambda))
            }
            Cone::Psd { n, complex } => {
                let sm = unpack(n, complex, s);
                let zm = unpack(n, complex, z);
                let ls = sm
                    .cholesky()
                    .ok_or_else(|| Error::Solver("primal PSD iterate lost definiteness".into()))?
                    .l();
                let lz = zm
                    .cholesky()
                    .ok_or_else(|| Error::Solver("dual PSD iterate lost definiteness".into()))?
                    .l();
                let m = lz.adjoint() * &ls;
                let (u, sig, v_t) = if complex {
                    let svd = m.svd(true, true);
                    (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap())
                } else {
                    let mr: DMatrix<f64> = m.map(|e| e.re);
                    let svd = mr.svd(true, true);
                    (
                        svd.u.unwrap().map(cr),
                        svd.singular_values,
                        svd.v_t.unwrap().map(cr),
                    )
                };
                if sig.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Solver("degenerate PSD scaling".into()));
                }
                let inv_sqrt = sig.map(|x| 1.0 / x.sqrt());
                let mut r = ls * v_t.adjoint();
                for j in 0..n {
                    r.column_mut(j).iter_mut().for_each(|e| *e *= inv_sqrt[j]);
                }
                let mut rinv = u.adjoint() * lz.adjoint();
                for i in 0..n {
                    rinv.row_mut(i).iter_mut().for_each(|e| *e *= inv_sqrt[i]);
                }
                let mut lambda = vec![0.0; cone.dim()];
                lambda[..n].copy_from_slice(sig.as_slice());
                Ok((Scaling::Psd { n, complex, r, rinv }, lambda))
            }
        }
    }

    /// `out = W u`.
    pub fn apply_w(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => {
                for i in 0..u.len() {
                    out[i] = w[i] * u[i];
                }
            }
            Scaling::Soc { beta, v } => soc_apply(*beta, v.as_slice(), false, u, out),
            Scaling::Psd { n, complex, r, .. } => {
                let um = unpack(*n, *complex, u);
                pack(*n, *complex, &(r.adjoint() * um * r), out);
            }
        }
    }

    /// `out = W^T u`.
    pub fn apply_wt(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { n, complex, r, .. } => {
                let um = unpack(*n, *complex, u);
                pack(*n, *complex, &(r * um * r.adjoint()), out);
            }
            _ => self.apply_w(u, out),
        }
    }

    /// `out = W^{-T} u`.
    pub fn apply_winvt(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => {
                for i in 0..u.len() {
                    out[i] = u[i] / w[i];
                }
            }
            Scaling::Soc { beta, v } => soc_apply(*beta, v.as_slice(), true, u, out),
            Scaling::Psd { n, complex, rinv, .. } => {
                let um = unpack(*n, *complex, u);
                pack(*n, *complex, &(rinv * um * rinv.adjoint()), out);
            }
        }
    }

    /// `out = W^{-1} u`.
    pub fn apply_winv(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { n, complex, rinv, .. } => {
                let um = unpack(*n, *complex, u);
                pack(*n, *complex, &(rinv.adjoint() * um * rinv), out);
            }
            _ => self.apply_winvt(u, out),
        }
    }

    /// Dense matrix of `W^{-1} W^{-T}` in packed coordinates.
    pub fn hessian(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Scaling::Nonneg { w } => DMatrix::from_diagonal(&DVector::from_iterator(
                dim,
                w.iter().map(|x| 1.0 / (x * x)),
            )),
            Scaling::Soc { .. } => {
                let mut h = DMatrix::zeros(dim, dim);
                let mut e = vec![0.0; dim];
                let mut tmp = vec![0.0; dim];
                let mut col = vec![0.0; dim];
                for j in 0..dim {
                    e.fill(0.0);
                    e[j] = 1.0;
                    self.apply_winvt(&e, &mut tmp);
                    self.apply_winv(&tmp, &mut col);
                    h.column_mut(j).copy_from_slice(&col);
                }
                h
            }
            Scaling::Psd { n, complex, rinv, .. } => psd_hessian(*n, *complex, &(rinv.adjoint() * rinv), dim),
        }
    }
}

fn soc_apply(beta: f64, v: &[f64], inverse: bool, u: &[f64], out: &mut [f64]) {
    // W = beta (2 v v^T - J), W^{-1} = (2 Jv (Jv)^T - J) / beta.
    let d = u.len();
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut vu = v[0] * u[0];
    for i in 1..d {
        vu += sign * v[i] * u[i];
    }
    let f = if inverse { 1.0 / beta } else { beta };
    out[0] = f * (2.0 * v[0] * vu - u[0]);
    for i in 1..d {
        out[i] = f * (2.0 * sign * v[i] * vu + u[i]);
    }
}

/// Matrix of `U -> P U P` in packed coordinates.
fn psd_hessian(n: usize, complex: bool, p: &CMatrix, dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(dim, dim);
    let pairs = n * n.saturating_sub(1) / 2;
    let cols: Vec<_> = (0..n).map(|a| p.column(a).into_owned()).collect();
    let mut buf = vec![0.0; dim];
    let put = |h: &mut DMatrix<f64>, j: usize, m: &CMatrix, buf: &mut Vec<f64>| {
        pack(n, complex, m, buf);
        h.column_mut(j).copy_from_slice(buf);
    };
    for a in 0..n {
        let m = &cols[a] * cols[a].adjoint();
        put(&mut h, a, &m, &mut buf);
    }
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            let ab = &cols[a] * cols[b].adjoint();
            let ba = ab.adjoint();
            let re = (&ab + &ba) * cr(1.0 / SQRT2);
            put(&mut h, n + k, &re, &mut buf);
            if complex {
                let im = (ab - ba) * Complex64::new(0.0, 1.0 / SQRT2);
                put(&mut h, n + pairs + k, &im, &mut buf);
            }
            k += 1;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::testutil::*;
    use rand::Rng;

    fn random_interior(cone: &Cone, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        let d = cone.dim();
        match *cone {
            Cone::Nonneg(_) => (0..d).map(|_| r.random_range(0.1..3.0)).collect(),
            Cone::Soc(_) => {
                let mut u: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                u[0] = norm(&u[1..]) + r.random_range(0.1..1.0);
                u
            }
            Cone::Psd { n, complex } => {
                let a = if complex {
                    rand_matrix(&mut r, n, n)
                } else {
                    rand_matrix(&mut r, n, n).map(|z| cr(z.re))
                };
                let m = &a * a.adjoint() + CMatrix::identity(n, n) * cr(0.1);
                let mut out = vec![0.0; d];
                pack(n, complex, &m, &mut out);
                out
            }
        }
    }

    fn cones() -> Vec<Cone> {
        vec![
            Cone::Nonneg(4),
            Cone::Soc(5),
            Cone::Psd { n: 3, complex: false },
            Cone::Psd { n: 4, complex: true },
        ]
    }

    #[test]
    fn pack_is_an_isometry() {
        let mut r = rng(1);
        for complex in [false, true] {
            let n = 4;
            let mk = |r: &mut rand_chacha::ChaCha8Rng| {
                let h = rand_hermitian(r, n);
                if complex { h } else { h.map(|z| cr(z.re)) }
            };
            let (x, y) = (mk(&mut r), mk(&mut r));
            let d = Cone::Psd { n, complex }.dim();
            let (mut px, mut py) = (vec![0.0; d], vec![0.0; d]);
            pack(n, complex, &x, &mut px);
            pack(n, complex, &y, &mut py);
            let tr = (&x * &y).trace().re;
            assert!((dot(&px, &py) - tr).abs() < 1e-12 * (1.0 + tr.abs()));
            assert!((unpack(n, complex, &px) - &x).norm() < 1e-12);
        }
    }

    #[test]
    fn nt_scaling_maps_both_points_to_lambda() {
        for (i, cone) in cones().iter().enumerate() {
            let s = random_interior(cone, 10 + i as u64);
            let z = random_interior(cone, 20 + i as u64);
            let (sc, lambda) = Scaling::new(cone, &s, &z).unwrap();
            let d = cone.dim();
            let (mut wz, mut ws) = (vec![0.0; d], vec![0.0; d]);
            sc.apply_w(&z, &mut wz);
            sc.apply_winvt(&s, &mut ws);
            for k in 0..d {
                assert!((wz[k] - lambda[k]).abs() < 1e-10, "{cone:?} Wz");
                assert!((ws[k] - lambda[k]).abs() < 1e-10, "{cone:?} W^-T s");
            }
            // W^{-1} inverts W, W^T is the adjoint of W.
            let u = random_interior(cone, 30 + i as u64);
            let v = random_interior(cone, 40 + i as u64);
            let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
            sc.apply_w(&u, &mut a);
            sc.apply_winv(&a, &mut b);
            assert!(u.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
            sc.apply_wt(&v, &mut b);
            assert!((dot(&a, &v) - dot(&u, &b)).abs() < 1e-9 * (1.0 + dot(&a, &v).abs()));
            // Hessian matches the operator.
            let h = sc.hessian(d);
            let (mut t, mut hu) = (vec![0.0; d], vec![0.0; d]);
            sc.apply_winvt(&u, &mut t);
            sc.apply_winv(&t, &mut hu);
            let hu2 = &h * DVector::from_column_slice(&u);
            assert!(hu.iter().zip(hu2.iter()).all(|(x, y)| (x - y).abs() < 1e-8 * (1.0 + x.abs())));
        }
    }

    #[test]
    fn jdiv_inverts_jprod() {
        for (i, cone) in cones().iter().enumerate() {
            let s = random_interior(cone, 50 + i as u64);
            let z = random_interior(cone, 60 + i as u64);
            let (_, lambda) = Scaling::new(cone, &s, &z).unwrap();
            let r = random_interior(cone, 70 + i as u64);
            let d = cone.dim();
            let (mut x, mut back) = (vec![0.0; d], vec![0.0; d]);
            cone.jdiv(&lambda, &r, &mut x);
            cone.jprod(&lambda, &x, &mut back);
            assert!(r.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + a.abs())));
        }
    }

    #[test]
    fn max_step_reaches_boundary() {
        for (i, cone) in cones().iter().enumerate() {
            let s = random_interior(cone, 80 + i as u64);
            let z = random_interior(cone, 90 + i as u64);
            let (_, lambda) = Scaling::new(cone, &s, &z).unwrap();
            let mut r = rng(100 + i as u64);
            let dir: Vec<f64> = (0..cone.dim()).map(|_| r.random_range(-3.0..1.0)).collect();
            let a = cone.max_step(&lambda, &dir);
            assert!(a.is_finite() && a > 0.0);
            let at = |t: f64| -> f64 {
                let p: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| l + t * d).collect();
                cone.interior_margin(&p)
            };
            assert!(at(0.999 * a) > -1e-12, "{cone:?}");
            assert!(at(1.001 * a) < 1e-12, "{cone:?}");
        }
    }
}
