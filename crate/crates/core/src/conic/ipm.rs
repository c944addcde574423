//! Homogeneous self-dual primal-dual interior-point method for the real
//! standard form
//!
//! ```text
//! minimize c'x   subject to   G x + s = h,   A x = b,   s in K
//! ```
//!
//! where `K` is a product of the cones in [`super::cones`]. Search
//! directions use Nesterov-Todd scaling and Mehrotra's predictor-corrector
//! scheme; the Newton systems are reduced to `[[G'HG, A'], [A, 0]]` and
//! solved by a regularized LU factorization with iterative refinement.

use nalgebra::{DMatrix, DVector};

use super::cones::{Cone, Scaling};
use super::Status;
use crate::error::{Error, Result};
use crate::matkernel::CMatrix;

/// Rows of `G` belonging to one cone.
#[derive(Debug, Clone)]
pub(crate) enum Rows {
    /// Arbitrary dense rows.
    Dense(DMatrix<f64>),
    /// `-scale * x[offset .. offset + dim]`: the cone variable is a slice of `x`.
    Var { offset: usize, scale: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct ConeBlock {
    pub cone: Cone,
    pub rows: Rows,
}

#[derive(Debug, Clone)]
pub(crate) struct StdForm {
    pub n: usize,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub blocks: Vec<ConeBlock>,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct StdResult {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    pub status: Status,
    pub iterations: usize,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
}

impl StdForm {
    pub fn m(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.dim()).sum()
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            off.push(acc);
            acc += b.cone.dim();
        }
        off
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.degree()).sum()
    }

    pub fn gx(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (blk, off) in self.blocks.iter().zip(self.offsets()) {
            let d = blk.cone.dim();
            match &blk.rows {
                Rows::Dense(g) => out.rows_mut(off, d).copy_from(&(g * x)),
                Rows::Var { offset, scale } => {
                    for i in 0..d {
                        out[off + i] = -scale * x[offset + i];
                    }
                }
            }
        }
        out
    }

    pub fn gtz(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (blk, off) in self.blocks.iter().zip(self.offsets()) {
            let d = blk.cone.dim();
            let zk = z.rows(off, d);
            match &blk.rows {
                Rows::Dense(g) => out += g.tr_mul(&zk),
                Rows::Var { offset, scale } => {
                    for i in 0..d {
                        out[offset + i] -= scale * zk[i];
                    }
                }
            }
        }
        out
    }

    /// Applies row equilibration and data normalization.
    fn equilibrate(&self) -> (StdForm, Equilibration) {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut dg = DVector::zeros(self.m());
        for (blk, off) in self.blocks.iter().zip(self.offsets()) {
            let d = blk.cone.dim();
            match &blk.rows {
                Rows::Var { offset, scale } => {
                    dg.rows_mut(off, d).fill(1.0 / scale);
                    blocks.push(ConeBlock { cone: blk.cone, rows: Rows::Var { offset: *offset, scale: 1.0 } });
                }
                Rows::Dense(g) => {
                    // Rows are scaled by the larger of their coefficients and
                    // right-hand side, so a nearly inactive row with a huge
                    // bound cannot dominate the data normalization.
                    let mut g = g.clone();
                    if let Cone::Nonneg(_) = blk.cone {
                        for i in 0..d {
                            let nrm = g.row(i).amax().max(self.h[off + i].abs());
                            let f = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
                            g.row_mut(i).scale_mut(f);
                            dg[off + i] = f;
                        }
                    } else {
                        let nrm = g.amax().max(self.h.rows(off, d).amax());
                        let f = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
                        g.scale_mut(f);
                        dg.rows_mut(off, d).fill(f);
                    }
                    blocks.push(ConeBlock { cone: blk.cone, rows: Rows::Dense(g) });
                }
            }
        }
        let mut a = self.a.clone();
        let mut da = DVector::zeros(self.p());
        for i in 0..self.p() {
            let nrm = a.row(i).amax().max(self.b[i].abs());
            let f = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
            a.row_mut(i).scale_mut(f);
            da[i] = f;
        }
        let gamma_c = nonzero_or_one(self.c.amax());
        let h = self.h.component_mul(&dg);
        let b = self.b.component_mul(&da);
        let gamma_b = nonzero_or_one(h.amax().max(b.amax()));
        let scaled = StdForm {
            n: self.n,
            c: &self.c / gamma_c,
            a,
            b: b / gamma_b,
            blocks,
            h: h / gamma_b,
        };
        (scaled, Equilibration { dg, da, gamma_c, gamma_b })
    }
}

fn nonzero_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

struct Equilibration {
    dg: DVector<f64>,
    da: DVector<f64>,
    gamma_c: f64,
    gamma_b: f64,
}

impl Equilibration {
    fn restore(&self, r: &mut StdResult) {
        let (gb, gc) = match r.status {
            Status::Infeasible => (1.0, 1.0),
            Status::Unbounded => (1.0, 1.0),
            _ => (self.gamma_b, self.gamma_c),
        };
        r.x *= gb;
        r.s = r.s.component_div(&self.dg) * gb;
        r.y = r.y.component_mul(&self.da) * gc;
        r.z = r.z.component_mul(&self.dg) * gc;
    }
}

/// Factored reduced Newton system for one scaling.
struct Kkt<'a> {
    f: &'a StdForm,
    offsets: Vec<usize>,
    scalings: &'a [Scaling],
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(f: &'a StdForm, scalings: &'a [Scaling], grams: &[Option<DMatrix<f64>>]) -> Result<Self> {
        let n = f.n;
        let p = f.p();
        let mut q = DMatrix::zeros(n, n);
        for ((blk, sc), gram) in f.blocks.iter().zip(scalings).zip(grams) {
            let d = blk.cone.dim();
            match (&blk.rows, sc, gram) {
                (Rows::Var { offset, scale }, _, _) => {
                    let mut view = q.view_mut((*offset, *offset), (d, d));
                    view += sc.hessian(d) * (scale * scale);
                }
                // H = (4|v|^2 u u' - 2 u v' - 2 v u' + I) / beta^2 with u = J v.
                (Rows::Dense(g), Scaling::Soc { beta, v }, Some(gg)) => {
                    let mut u = v.clone();
                    u.rows_mut(1, d - 1).neg_mut();
                    let a = g.tr_mul(&u);
                    let b = g.tr_mul(v);
                    let inv = 1.0 / (beta * beta);
                    q += gg * inv;
                    q.ger(4.0 * v.norm_squared() * inv, &a, &a, 1.0);
                    q.ger(-2.0 * inv, &a, &b, 1.0);
                    q.ger(-2.0 * inv, &b, &a, 1.0);
                }
                (Rows::Dense(g), Scaling::Nonneg { w }, _) => {
                    let mut sg = g.clone();
                    for (i, wi) in w.iter().enumerate() {
                        sg.row_mut(i).scale_mut(1.0 / wi);
                    }
                    q += sg.tr_mul(&sg);
                }
                (Rows::Dense(g), _, _) => {
                    let hg = sc.hessian(d) * g;
                    q += g.tr_mul(&hg);
                }
            }
        }
        let qmax = q.diagonal().amax().max(1.0);
        let delta = 1e-13 * qmax;
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            k[(i, i)] += delta;
        }
        k.view_mut((n, 0), (p, n)).copy_from(&f.a);
        k.view_mut((0, n), (n, p)).copy_from(&f.a.transpose());
        for i in 0..p {
            k[(n + i, n + i)] = -delta;
        }
        let lu = k.lu();
        Ok(Kkt { f, offsets: f.offsets(), scalings, lu })
    }

    /// `W^{-1} W^{-T} u` conewise.
    fn h_apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        let mut tmp = Vec::new();
        for ((blk, sc), &off) in self.f.blocks.iter().zip(self.scalings).zip(&self.offsets) {
            let d = blk.cone.dim();
            tmp.resize(d, 0.0);
            sc.apply_winvt(&u.as_slice()[off..off + d], &mut tmp);
            sc.apply_winv(&tmp, &mut out.as_mut_slice()[off..off + d]);
        }
        out
    }

    /// `W' W u` conewise.
    fn wtw_apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        let mut tmp = Vec::new();
        for ((blk, sc), &off) in self.f.blocks.iter().zip(self.scalings).zip(&self.offsets) {
            let d = blk.cone.dim();
            tmp.resize(d, 0.0);
            sc.apply_w(&u.as_slice()[off..off + d], &mut tmp);
            sc.apply_wt(&tmp, &mut out.as_mut_slice()[off..off + d]);
        }
        out
    }

    /// One solve through the factored reduced system.
    fn solve_reduced(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.f.n;
        let p = self.f.p();
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(bx + self.f.gtz(&self.h_apply(bz))));
        rhs.rows_mut(n, p).copy_from(by);
        let sol = self.lu.solve(&rhs)?;
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, p).into_owned();
        let dz = self.h_apply(&(self.f.gx(&dx) - bz));
        Some((dx, dy, dz))
    }

    /// Solves `[[0, A', G'], [A, 0, 0], [G, 0, -W'W]] (dx, dy, dz) = (bx, by, bz)`
    /// with iterative refinement on the full system.
    fn solve(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let fail = || Error::Solver("singular Newton system".into());
        let (mut dx, mut dy, mut dz) = self.solve_reduced(bx, by, bz).ok_or_else(fail)?;
        let scale = bx.amax().max(by.amax()).max(bz.amax()).max(1e-300);
        let residual = |dx: &DVector<f64>, dy: &DVector<f64>, dz: &DVector<f64>| {
            let rx = bx - self.f.a.tr_mul(dy) - self.f.gtz(dz);
            let ry = by - &self.f.a * dx;
            let rz = bz - (self.f.gx(dx) - self.wtw_apply(dz));
            (rx, ry, rz)
        };
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            let (rx, ry, rz) = residual(&dx, &dy, &dz);
            let err = rx.amax().max(ry.amax()).max(rz.amax());
            if !(err > 1e-14 * scale) || err > 0.5 * last {
                break;
            }
            last = err;
            let Some((cx, cy, cz)) = self.solve_reduced(&rx, &ry, &rz) else { break };
            dx += cx;
            dy += cy;
            dz += cz;
        }
        if dx.iter().chain(dy.iter()).chain(dz.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite Newton direction".into()));
        }
        Ok((dx, dy, dz))
    }
}

fn identity_scalings(f: &StdForm) -> Vec<Scaling> {
    f.blocks
        .iter()
        .map(|b| match b.cone {
            Cone::Nonneg(d) => Scaling::Nonneg { w: vec![1.0; d] },
            Cone::Soc(d) => {
                let mut v = DVector::zeros(d);
                if d > 0 {
                    v[0] = 1.0;
                }
                Scaling::Soc { beta: 1.0, v }
            }
            Cone::Psd { n, complex } => Scaling::Psd {
                n,
                complex,
                r: CMatrix::identity(n, n),
                rinv: CMatrix::identity(n, n),
            },
        })
        .collect()
}

/// Shifts `u` into the interior of `K` if needed.
fn push_interior(f: &StdForm, u: &mut DVector<f64>) {
    let offsets = f.offsets();
    let mut margin = f64::INFINITY;
    for (blk, &off) in f.blocks.iter().zip(&offsets) {
        let d = blk.cone.dim();
        if d > 0 {
            margin = margin.min(blk.cone.interior_margin(&u.as_slice()[off..off + d]));
        }
    }
    let scale = u.amax().max(1.0);
    if margin <= 1e-8 * scale {
        let shift = 1.0 - margin.min(0.0);
        let mut e = Vec::new();
        for (blk, &off) in f.blocks.iter().zip(&offsets) {
            let d = blk.cone.dim();
            e.resize(d, 0.0);
            blk.cone.identity(&mut e);
            for i in 0..d {
                u[off + i] += shift * e[i];
            }
        }
    }
}

/// Conewise map over `(lambda, u)` pairs.
fn conewise<F>(f: &StdForm, offsets: &[usize], out_len: usize, mut op: F) -> DVector<f64>
where
    F: FnMut(usize, &Cone, std::ops::Range<usize>, &mut [f64]),
{
    let mut out = DVector::zeros(out_len);
    for (k, (blk, &off)) in f.blocks.iter().zip(offsets).enumerate() {
        let d = blk.cone.dim();
        op(k, &blk.cone, off..off + d, &mut out.as_mut_slice()[off..off + d]);
    }
    out
}

pub(crate) fn solve_std(orig: &StdForm, opts: &IpmOptions) -> StdResult {
    let (f, eq) = orig.equilibrate();
    let mut res = solve_scaled(&f, opts);
    eq.restore(&mut res);
    res
}

fn trivial(f: &StdForm, status: Status) -> StdResult {
    StdResult {
        x: DVector::zeros(f.n),
        y: DVector::zeros(f.p()),
        s: DVector::zeros(f.m()),
        z: DVector::zeros(f.m()),
        status,
        iterations: 0,
        pres: 0.0,
        dres: 0.0,
        gap: 0.0,
    }
}

fn solve_scaled(f: &StdForm, opts: &IpmOptions) -> StdResult {
    let (n, p, m) = (f.n, f.p(), f.m());
    if m == 0 && p == 0 {
        if f.c.amax() == 0.0 {
            return trivial(f, Status::Optimal);
        }
        let mut r = trivial(f, Status::Unbounded);
        r.x = -&f.c / f.c.norm();
        return r;
    }
    let offsets = f.offsets();
    let degree = f.degree() as f64;
    let resx0 = f.c.norm().max(1.0);
    let resy0 = f.b.norm().max(1.0);
    let resz0 = f.h.norm().max(1.0);

    // Starting point from least-squares problems with identity scaling.
    let grams: Vec<Option<DMatrix<f64>>> = f
        .blocks
        .iter()
        .map(|b| match (&b.cone, &b.rows) {
            (Cone::Soc(_), Rows::Dense(g)) => Some(g.tr_mul(g)),
            _ => None,
        })
        .collect();
    let id = identity_scalings(f);
    let (mut x, mut y, mut s, mut z) = match Kkt::new(f, &id, &grams).and_then(|k| {
        let (x, _, zp) = k.solve(&DVector::zeros(n), &f.b, &f.h)?;
        let (_, y, zd) = k.solve(&(-&f.c), &DVector::zeros(p), &DVector::zeros(m))?;
        Ok((x, y, -zp, zd))
    }) {
        Ok(v) => v,
        Err(_) => (DVector::zeros(n), DVector::zeros(p), DVector::zeros(m), DVector::zeros(m)),
    };
    push_interior(f, &mut s);
    push_interior(f, &mut z);
    let (mut tau, mut kappa) = (1.0_f64, 1.0_f64);

    let mut best: Option<(f64, StdResult)> = None;
    let record_best = |merit: f64, r: StdResult, best: &mut Option<(f64, StdResult)>| {
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            *best = Some((merit, r));
        }
    };

    for iter in 0..=opts.max_iter {
        let gx = f.gx(&x);
        let gtz = f.gtz(&z);
        let ax = &f.a * &x;
        let aty = f.a.tr_mul(&y);
        let rx = &aty + &gtz + &f.c * tau;
        let ry = &ax - &f.b * tau;
        let rz = &s + &gx - &f.h * tau;
        let cx = f.c.dot(&x);
        let hz_by = f.h.dot(&z) + f.b.dot(&y);
        let rt = kappa + cx + hz_by;

        let pcost = cx / tau;
        let dcost = -hz_by / tau;
        let sz = s.dot(&z);
        let gap = sz / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let pres = (ry.norm() / tau / resy0).max(rz.norm() / tau / resz0);
        let dres = rx.norm() / tau / resx0;
        let gap_measure = gap.min(relgap);
        let snapshot = |status: Status| StdResult {
            x: &x / tau,
            y: &y / tau,
            s: &s / tau,
            z: &z / tau,
            status,
            iterations: iter,
            pres,
            dres,
            gap: gap_measure,
        };
        log::trace!(
            "ipm {iter:3}: pcost {pcost:+.6e} dcost {dcost:+.6e} gap {gap_measure:.2e} pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}"
        );
        if pres <= opts.tol && dres <= opts.tol && gap_measure <= opts.tol {
            return snapshot(Status::Optimal);
        }
        if hz_by < 0.0 {
            let pinf = (&aty + &gtz).norm() / resx0 / -hz_by;
            if pinf <= opts.tol {
                return StdResult {
                    x: DVector::zeros(n),
                    y: &y / -hz_by,
                    s: DVector::zeros(m),
                    z: &z / -hz_by,
                    status: Status::Infeasible,
                    iterations: iter,
                    pres: pinf,
                    dres,
                    gap: f64::NAN,
                };
            }
        }
        if cx < 0.0 {
            let dinf = (ax.norm() / resy0).max((&gx + &s).norm() / resz0) / -cx;
            if dinf <= opts.tol {
                return StdResult {
                    x: &x / -cx,
                    y: DVector::zeros(p),
                    s: &s / -cx,
                    z: DVector::zeros(m),
                    status: Status::Unbounded,
                    iterations: iter,
                    pres,
                    dres: dinf,
                    gap: f64::NAN,
                };
            }
        }
        let merit = pres.max(dres).max(gap_measure);
        if merit.is_finite() {
            record_best(merit, snapshot(Status::NumericalLimit), &mut best);
        }
        if iter == opts.max_iter {
            break;
        }

        // Scaling at the current iterate.
        let mut scalings = Vec::with_capacity(f.blocks.len());
        let mut lambda = DVector::zeros(m);
        let mut failed = false;
        for (blk, &off) in f.blocks.iter().zip(&offsets) {
            let d = blk.cone.dim();
            match Scaling::new(&blk.cone, &s.as_slice()[off..off + d], &z.as_slice()[off..off + d]) {
                Ok((sc, l)) => {
                    lambda.rows_mut(off, d).copy_from_slice(&l);
                    scalings.push(sc);
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }
        let kkt = match Kkt::new(f, &scalings, &grams) {
            Ok(k) => k,
            Err(_) => break,
        };
        let d1 = match kkt.solve(&(-&f.c), &f.b, &f.h) {
            Ok(d) => d,
            Err(_) => break,
        };
        let denom_const = f.c.dot(&d1.0) + f.b.dot(&d1.1) + f.h.dot(&d1.2);
        let mu = (sz + tau * kappa) / (degree + 1.0);

        let lambda_sq = conewise(f, &offsets, m, |_, cone, r, out| {
            cone.jprod(&lambda.as_slice()[r.clone()], &lambda.as_slice()[r], out)
        });

        let mut affine: Option<(DVector<f64>, DVector<f64>, f64, f64)> = None;
        let mut sigma = 0.0;
        let mut step_ok = false;
        for phase in 0..2 {
            let nu = if phase == 0 { 1.0 } else { 1.0 - sigma };
            let (rc, rtc) = if let Some((dsa, dza, dta, dka)) = &affine {
                let corr = conewise(f, &offsets, m, |_, cone, r, out| {
                    cone.jprod(&dsa.as_slice()[r.clone()], &dza.as_slice()[r], out)
                });
                let mut e = conewise(f, &offsets, m, |_, cone, _, out| cone.identity(out));
                e *= sigma * mu;
                (e - &lambda_sq - corr, -tau * kappa + sigma * mu - dta * dka)
            } else {
                (-lambda_sq.clone(), -tau * kappa)
            };
            let ds_tilde = conewise(f, &offsets, m, |_, cone, r, out| {
                cone.jdiv(&lambda.as_slice()[r.clone()], &rc.as_slice()[r], out)
            });
            let wt_ds = conewise(f, &offsets, m, |k, _, r, out| {
                scalings[k].apply_wt(&ds_tilde.as_slice()[r], out)
            });
            let bz = -&rz * nu - &wt_ds;
            let d2 = match kkt.solve(&(-&rx * nu), &(-&ry * nu), &bz) {
                Ok(d) => d,
                Err(_) => break,
            };
            let denom = denom_const - kappa / tau;
            let dtau = (-nu * rt - rtc / tau - (f.c.dot(&d2.0) + f.b.dot(&d2.1) + f.h.dot(&d2.2)))
                / denom;
            let dx = &d2.0 + &d1.0 * dtau;
            let dy = &d2.1 + &d1.1 * dtau;
            let dz = &d2.2 + &d1.2 * dtau;
            let dkappa = (rtc - kappa * dtau) / tau;
            let dz_sc = conewise(f, &offsets, m, |k, _, r, out| {
                scalings[k].apply_w(&dz.as_slice()[r], out)
            });
            let ds_sc = &ds_tilde - &dz_sc;

            let mut amax = f64::INFINITY;
            for (blk, &off) in f.blocks.iter().zip(&offsets) {
                let d = blk.cone.dim();
                if d == 0 {
                    continue;
                }
                let l = &lambda.as_slice()[off..off + d];
                amax = amax
                    .min(blk.cone.max_step(l, &ds_sc.as_slice()[off..off + d]))
                    .min(blk.cone.max_step(l, &dz_sc.as_slice()[off..off + d]));
            }
            if dtau < 0.0 {
                amax = amax.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                amax = amax.min(-kappa / dkappa);
            }
            if amax.is_nan() {
                break;
            }
            if phase == 0 {
                let a = amax.min(1.0);
                sigma = (1.0 - a).powi(3);
                affine = Some((ds_sc, dz_sc, dtau, dkappa));
            } else {
                let alpha = (0.99 * amax).min(1.0);
                if !(alpha > 0.0) {
                    break;
                }
                let ds = conewise(f, &offsets, m, |k, _, r, out| {
                    scalings[k].apply_wt(&ds_sc.as_slice()[r], out)
                });
                x += dx * alpha;
                y += dy * alpha;
                z += dz * alpha;
                s += ds * alpha;
                tau += alpha * dtau;
                kappa += alpha * dkappa;
                step_ok = true;
            }
        }
        if !step_ok || !(tau > 0.0) || !(kappa > 0.0) {
            break;
        }
    }
    match best {
        Some((_, r)) => r,
        None => trivial(f, Status::NumericalLimit),
    }
}
