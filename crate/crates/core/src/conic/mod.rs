//! Small dense conic solver for the beamforming subproblems.
//!
//! Problems are stated over typed variable blocks — Hermitian or real
//! symmetric PSD matrices, free complex vectors and free real vectors — with
//! a linear objective to maximize, scalar linear constraints and
//! second-order-cone constraints. Every functional is real-valued: matrix
//! coefficients act as `Re Tr(C X)` and vector coefficients as `Re(c^H x)`.
//!
//! [`solve`] maps the problem to the real standard form of [`ipm`] (PSD
//! blocks packed isometrically, complex vectors split into real and imaginary
//! parts) and runs a homogeneous self-dual interior-point method.
//!
//! # Triplet dump format
//!
//! [`SdpProblem::write_triplets`] writes the real standard form
//! `min c'x  s.t.  G x + s = h, A x = b, s in K` as text, one record per
//! line, indices 0-based:
//!
//! ```text
//! dims <n> <m> <p>            variables, cone rows, equality rows
//! cone nonneg <d> | cone soc <d> | cone psd <n> real|complex
//! c <j> <value>
//! A <i> <j> <value>
//! b <i> <value>
//! G <i> <j> <value>
//! h <i> <value>
//! ```
//!
//! Cone records appear in row order; PSD rows are packed as diagonal,
//! `sqrt(2) Re` of the strict upper triangle (row-major), then `sqrt(2) Im`.
//! Zero entries are omitted.

pub mod cones;
mod ipm;

use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkernel::{c, cr, CMatrix, CVector};
use cones::{pack, unpack, Cone};
use ipm::{ConeBlock, IpmOptions, Rows, StdForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

/// Kind and size of a variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// `n x n` Hermitian matrix constrained PSD.
    HermitianPsd(usize),
    /// `n x n` real symmetric matrix constrained PSD.
    SymmetricPsd(usize),
    /// Free complex `n`-vector.
    ComplexFree(usize),
    /// Free real `n`-vector.
    RealFree(usize),
}

impl BlockKind {
    fn real_dim(&self) -> usize {
        match *self {
            BlockKind::HermitianPsd(n) => n * n,
            BlockKind::SymmetricPsd(n) => n * (n + 1) / 2,
            BlockKind::ComplexFree(n) => 2 * n,
            BlockKind::RealFree(n) => n,
        }
    }

    fn len(&self) -> usize {
        match *self {
            BlockKind::HermitianPsd(n)
            | BlockKind::SymmetricPsd(n)
            | BlockKind::ComplexFree(n)
            | BlockKind::RealFree(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(usize);

impl BlockId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Coeff {
    /// `Re Tr(C X)`.
    Matrix(CMatrix),
    /// `Re(c^H x)`.
    Vector(CVector),
    /// `c^T x`.
    Real(DVector<f64>),
    /// `coef * x_i`: diagonal entry of a matrix block, real part of a
    /// complex entry, or a real entry.
    Entry(usize, f64),
}

/// Real affine functional of the variable blocks.
#[derive(Debug, Clone, Default)]
pub struct AffineExpr {
    terms: Vec<(BlockId, Coeff)>,
    constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self { terms: Vec::new(), constant: value }
    }

    /// `Re Tr(C X)` for a matrix block `X`.
    pub fn trace(block: BlockId, coeff: CMatrix) -> Self {
        Self { terms: vec![(block, Coeff::Matrix(coeff))], constant: 0.0 }
    }

    /// `Re(c^H x)` for a complex vector block `x`.
    pub fn inner(block: BlockId, coeff: CVector) -> Self {
        Self { terms: vec![(block, Coeff::Vector(coeff))], constant: 0.0 }
    }

    /// `Im(c^H x)` for a complex vector block `x`.
    pub fn inner_im(block: BlockId, coeff: CVector) -> Self {
        Self::inner(block, coeff * c(0.0, 1.0))
    }

    /// `c^T x` for a real vector block `x`.
    pub fn real(block: BlockId, coeff: DVector<f64>) -> Self {
        Self { terms: vec![(block, Coeff::Real(coeff))], constant: 0.0 }
    }

    /// `coef * x_i` (diagonal entry for matrix blocks, real part for complex
    /// vectors).
    pub fn entry(block: BlockId, index: usize, coef: f64) -> Self {
        Self { terms: vec![(block, Coeff::Entry(index, coef))], constant: 0.0 }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn plus_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.constant *= factor;
        for (_, coeff) in &mut self.terms {
            match coeff {
                Coeff::Matrix(m) => *m *= cr(factor),
                Coeff::Vector(v) => *v *= cr(factor),
                Coeff::Real(r) => *r *= factor,
                Coeff::Entry(_, f) => *f *= factor,
            }
        }
        self
    }

    /// Evaluates the functional at the given block values.
    pub fn eval(&self, values: &[BlockValue]) -> f64 {
        let mut acc = self.constant;
        for (id, coeff) in &self.terms {
            let v = &values[id.0];
            acc += match (coeff, v) {
                (Coeff::Matrix(cm), BlockValue::Matrix(x)) => (cm * x).trace().re,
                (Coeff::Vector(cv), BlockValue::Vector(x)) => cv.dotc(x).re,
                (Coeff::Real(cv), BlockValue::Real(x)) => cv.dot(x),
                (Coeff::Entry(i, f), BlockValue::Matrix(x)) => f * x[(*i, *i)].re,
                (Coeff::Entry(i, f), BlockValue::Vector(x)) => f * x[*i].re,
                (Coeff::Entry(i, f), BlockValue::Real(x)) => f * x[*i],
                _ => f64::NAN,
            };
        }
        acc
    }

    fn check(&self, blocks: &[BlockKind]) -> Result<()> {
        for (id, coeff) in &self.terms {
            let kind = blocks
                .get(id.0)
                .ok_or_else(|| Error::Dimension(format!("unknown block {}", id.0)))?;
            let n = kind.len();
            let ok = match (coeff, kind) {
                (Coeff::Matrix(m), BlockKind::HermitianPsd(_) | BlockKind::SymmetricPsd(_)) => {
                    m.nrows() == n && m.ncols() == n
                }
                (Coeff::Vector(v), BlockKind::ComplexFree(_)) => v.len() == n,
                (Coeff::Real(v), BlockKind::RealFree(_)) => v.len() == n,
                (Coeff::Entry(i, _), _) => *i < n,
                _ => false,
            };
            if !ok {
                return Err(Error::Dimension(format!(
                    "functional term does not match block {} ({kind:?})",
                    id.0
                )));
            }
        }
        Ok(())
    }

    /// Dense real row over the standard-form variables.
    fn row(&self, layout: &Layout) -> DVector<f64> {
        let mut row = DVector::zeros(layout.n);
        for (id, coeff) in &self.terms {
            let off = layout.offsets[id.0];
            let kind = layout.kinds[id.0];
            match (coeff, kind) {
                (Coeff::Matrix(m), BlockKind::HermitianPsd(n)) => {
                    let mut buf = vec![0.0; n * n];
                    pack(n, true, m, &mut buf);
                    for (k, v) in buf.iter().enumerate() {
                        row[off + k] += v;
                    }
                }
                (Coeff::Matrix(m), BlockKind::SymmetricPsd(n)) => {
                    let mut buf = vec![0.0; n * (n + 1) / 2];
                    pack(n, false, m, &mut buf);
                    for (k, v) in buf.iter().enumerate() {
                        row[off + k] += v;
                    }
                }
                (Coeff::Vector(v), BlockKind::ComplexFree(n)) => {
                    for k in 0..n {
                        row[off + k] += v[k].re;
                        row[off + n + k] += v[k].im;
                    }
                }
                (Coeff::Real(v), BlockKind::RealFree(n)) => {
                    for k in 0..n {
                        row[off + k] += v[k];
                    }
                }
                (Coeff::Entry(i, f), _) => row[off + i] += f,
                _ => unreachable!("checked by AffineExpr::check"),
            }
        }
        row
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: f64) -> AffineExpr {
        self.scaled(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub expr: AffineExpr,
    pub relation: Relation,
    pub bound: f64,
}

/// `||rows|| <= bound`.
#[derive(Debug, Clone)]
pub struct SocConstraint {
    pub rows: Vec<AffineExpr>,
    pub bound: AffineExpr,
}

/// Conic program over typed blocks; the objective is maximized.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    blocks: Vec<BlockKind>,
    objective: AffineExpr,
    constraints: Vec<LinearConstraint>,
    socs: Vec<SocConstraint>,
}

/// Value of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(CMatrix),
    Vector(CVector),
    Real(DVector<f64>),
}

impl BlockValue {
    pub fn as_matrix(&self) -> Option<&CMatrix> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&CVector> {
        match self {
            BlockValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<&DVector<f64>> {
        match self {
            BlockValue::Real(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub values: Vec<BlockValue>,
    pub objective: f64,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    y: DVector<f64>,
    z: DVector<f64>,
}

impl SdpSolution {
    pub fn matrix(&self, id: BlockId) -> &CMatrix {
        self.values[id.0].as_matrix().expect("block is not a matrix block")
    }

    pub fn vector(&self, id: BlockId) -> &CVector {
        self.values[id.0].as_vector().expect("block is not a complex vector block")
    }

    pub fn reals(&self, id: BlockId) -> &DVector<f64> {
        self.values[id.0].as_real().expect("block is not a real block")
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200 }
    }
}

struct Layout {
    n: usize,
    offsets: Vec<usize>,
    kinds: Vec<BlockKind>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> BlockId {
        self.blocks.push(kind);
        BlockId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[BlockKind] {
        &self.blocks
    }

    /// Sets the functional to maximize.
    pub fn maximize(&mut self, objective: AffineExpr) {
        self.objective = objective;
    }

    pub fn objective(&self) -> &AffineExpr {
        &self.objective
    }

    pub fn constrain(&mut self, expr: AffineExpr, relation: Relation, bound: f64) {
        self.constraints.push(LinearConstraint { expr, relation, bound });
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    /// Adds `||rows|| <= bound`.
    pub fn add_soc(&mut self, rows: Vec<AffineExpr>, bound: AffineExpr) {
        self.socs.push(SocConstraint { rows, bound });
    }

    pub fn socs(&self) -> &[SocConstraint] {
        &self.socs
    }

    /// Adds `||rows||^2 <= t` as the cone `||(rows, (t-1)/2)|| <= (t+1)/2`.
    pub fn add_squared_norm_bound(&mut self, mut rows: Vec<AffineExpr>, t: AffineExpr) {
        rows.push(t.clone().plus_constant(-1.0).scaled(0.5));
        self.add_soc(rows, t.plus_constant(1.0).scaled(0.5));
    }

    fn validate(&self) -> Result<()> {
        self.objective.check(&self.blocks)?;
        for con in &self.constraints {
            con.expr.check(&self.blocks)?;
            if !con.bound.is_finite() {
                return Err(Error::Domain("non-finite constraint bound".into()));
            }
        }
        for soc in &self.socs {
            soc.bound.check(&self.blocks)?;
            for r in &soc.rows {
                r.check(&self.blocks)?;
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut n = 0;
        for b in &self.blocks {
            offsets.push(n);
            n += b.real_dim();
        }
        Layout { n, offsets, kinds: self.blocks.clone() }
    }

    fn to_std(&self) -> Result<(StdForm, Layout)> {
        self.validate()?;
        let layout = self.layout();
        let n = layout.n;
        let c = -self.objective.row(&layout);

        let eqs: Vec<&LinearConstraint> =
            self.constraints.iter().filter(|c| c.relation == Relation::Eq).collect();
        let ineqs: Vec<&LinearConstraint> =
            self.constraints.iter().filter(|c| c.relation != Relation::Eq).collect();

        let mut a = DMatrix::zeros(eqs.len(), n);
        let mut b = DVector::zeros(eqs.len());
        for (i, con) in eqs.iter().enumerate() {
            a.set_row(i, &con.expr.row(&layout).transpose());
            b[i] = con.bound - con.expr.constant;
        }

        let mut blocks = Vec::new();
        let mut h = Vec::new();
        if !ineqs.is_empty() {
            let mut g = DMatrix::zeros(ineqs.len(), n);
            for (i, con) in ineqs.iter().enumerate() {
                let sign = if con.relation == Relation::Le { 1.0 } else { -1.0 };
                g.set_row(i, &(con.expr.row(&layout) * sign).transpose());
                h.push(sign * (con.bound - con.expr.constant));
            }
            blocks.push(ConeBlock { cone: Cone::Nonneg(ineqs.len()), rows: Rows::Dense(g) });
        }
        for soc in &self.socs {
            let d = soc.rows.len() + 1;
            let mut g = DMatrix::zeros(d, n);
            g.set_row(0, &(-soc.bound.row(&layout)).transpose());
            h.push(soc.bound.constant);
            for (i, r) in soc.rows.iter().enumerate() {
                g.set_row(i + 1, &(-r.row(&layout)).transpose());
                h.push(r.constant);
            }
            blocks.push(ConeBlock { cone: Cone::Soc(d), rows: Rows::Dense(g) });
        }
        for (k, kind) in self.blocks.iter().enumerate() {
            let cone = match *kind {
                BlockKind::HermitianPsd(n) => Cone::Psd { n, complex: true },
                BlockKind::SymmetricPsd(n) => Cone::Psd { n, complex: false },
                _ => continue,
            };
            h.extend(std::iter::repeat_n(0.0, cone.dim()));
            blocks.push(ConeBlock { cone, rows: Rows::Var { offset: layout.offsets[k], scale: 1.0 } });
        }
        let form = StdForm { n, c, a, b, blocks, h: DVector::from_vec(h) };
        Ok((form, layout))
    }

    fn unpack_values(&self, layout: &Layout, x: &DVector<f64>) -> Vec<BlockValue> {
        self.blocks
            .iter()
            .zip(&layout.offsets)
            .map(|(kind, &off)| match *kind {
                BlockKind::HermitianPsd(n) => {
                    BlockValue::Matrix(unpack(n, true, &x.as_slice()[off..off + n * n]))
                }
                BlockKind::SymmetricPsd(n) => BlockValue::Matrix(unpack(
                    n,
                    false,
                    &x.as_slice()[off..off + n * (n + 1) / 2],
                )),
                BlockKind::ComplexFree(n) => {
                    BlockValue::Vector(CVector::from_fn(n, |i, _| c(x[off + i], x[off + n + i])))
                }
                BlockKind::RealFree(n) => BlockValue::Real(x.rows(off, n).into_owned()),
            })
            .collect()
    }

    fn pack_values(&self, layout: &Layout, values: &[BlockValue]) -> Result<DVector<f64>> {
        if values.len() != self.blocks.len() {
            return Err(Error::Dimension("block value count mismatch".into()));
        }
        let mut x = DVector::zeros(layout.n);
        for ((kind, &off), v) in self.blocks.iter().zip(&layout.offsets).zip(values) {
            let d = kind.real_dim();
            let slot = &mut x.as_mut_slice()[off..off + d];
            match (kind, v) {
                (BlockKind::HermitianPsd(n), BlockValue::Matrix(m)) if m.nrows() == *n => {
                    pack(*n, true, m, slot)
                }
                (BlockKind::SymmetricPsd(n), BlockValue::Matrix(m)) if m.nrows() == *n => {
                    pack(*n, false, m, slot)
                }
                (BlockKind::ComplexFree(n), BlockValue::Vector(vv)) if vv.len() == *n => {
                    for i in 0..*n {
                        slot[i] = vv[i].re;
                        slot[n + i] = vv[i].im;
                    }
                }
                (BlockKind::RealFree(n), BlockValue::Real(vv)) if vv.len() == *n => {
                    slot.copy_from_slice(vv.as_slice())
                }
                _ => return Err(Error::Dimension(format!("value does not match block {kind:?}"))),
            }
        }
        Ok(x)
    }

    /// Objective value at the given block values.
    pub fn evaluate(&self, values: &[BlockValue]) -> f64 {
        self.objective.eval(values)
    }

    /// Writes the real standard form in the triplet format described in the
    /// module documentation.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        let (f, _) = self.to_std()?;
        writeln!(w, "dims {} {} {}", f.n, f.m(), f.p())?;
        for blk in &f.blocks {
            match blk.cone {
                Cone::Nonneg(d) => writeln!(w, "cone nonneg {d}")?,
                Cone::Soc(d) => writeln!(w, "cone soc {d}")?,
                Cone::Psd { n, complex } => {
                    writeln!(w, "cone psd {n} {}", if complex { "complex" } else { "real" })?
                }
            }
        }
        for (j, v) in f.c.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "c {j} {v:e}")?;
            }
        }
        for i in 0..f.p() {
            for j in 0..f.n {
                if f.a[(i, j)] != 0.0 {
                    writeln!(w, "A {i} {j} {:e}", f.a[(i, j)])?;
                }
            }
            if f.b[i] != 0.0 {
                writeln!(w, "b {i} {:e}", f.b[i])?;
            }
        }
        for (blk, off) in f.blocks.iter().zip(f.offsets()) {
            let d = blk.cone.dim();
            match &blk.rows {
                Rows::Dense(g) => {
                    for i in 0..d {
                        for j in 0..f.n {
                            if g[(i, j)] != 0.0 {
                                writeln!(w, "G {} {j} {:e}", off + i, g[(i, j)])?;
                            }
                        }
                    }
                }
                Rows::Var { offset, scale } => {
                    for i in 0..d {
                        writeln!(w, "G {} {} {:e}", off + i, offset + i, -scale)?;
                    }
                }
            }
        }
        for (i, v) in f.h.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "h {i} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// Solves `p` (maximization) with the interior-point method.
pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let (form, layout) = p.to_std()?;
    let res = ipm::solve_std(&form, &IpmOptions { tol: opts.tol, max_iter: opts.max_iter });
    let values = p.unpack_values(&layout, &res.x);
    let objective = p.evaluate(&values);
    record_solve(res.status, res.pres.max(res.dres).max(res.gap));
    Ok(SdpSolution {
        values,
        objective,
        status: res.status,
        primal_residual: res.pres,
        dual_residual: res.dres,
        gap: res.gap,
        iterations: res.iterations,
        y: res.y,
        z: res.z,
    })
}

/// Tally of the solves run on the current thread since the last
/// [`take_solve_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub solves: usize,
    /// Solves that ended in any status other than [`Status::Optimal`].
    pub not_optimal: usize,
    /// Largest reported residual (primal, dual or gap) over optimal solves.
    pub worst_residual: f64,
}

thread_local! {
    static STATS: std::cell::Cell<SolveStats> = std::cell::Cell::new(SolveStats::default());
}

fn record_solve(status: Status, residual: f64) {
    STATS.with(|c| {
        let mut s = c.get();
        s.solves += 1;
        if status == Status::Optimal {
            s.worst_residual = s.worst_residual.max(residual);
        } else {
            s.not_optimal += 1;
        }
        c.set(s);
    });
}

/// Returns and resets this thread's solve tally.
pub fn take_solve_stats() -> SolveStats {
    STATS.with(|c| c.replace(SolveStats::default()))
}

/// Optimality residuals recomputed from the problem data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Equality residual and cone violation of `h - G x`, relative.
    pub primal: f64,
    /// Stationarity residual and dual cone violation, relative.
    pub dual: f64,
    /// `|s'z|` relative to the objective magnitude.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

fn cone_violation(f: &StdForm, u: &DVector<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for (blk, off) in f.blocks.iter().zip(f.offsets()) {
        let d = blk.cone.dim();
        if d > 0 {
            worst = worst.max(-blk.cone.interior_margin(&u.as_slice()[off..off + d]));
        }
    }
    worst
}

/// Recomputes primal feasibility, dual feasibility and complementarity of
/// `s` (including any edits made to its block values) on `p`.
pub fn kkt_report(p: &SdpProblem, s: &SdpSolution) -> Result<KktReport> {
    let (f, layout) = p.to_std()?;
    let x = p.pack_values(&layout, &s.values)?;
    if s.y.len() != f.p() || s.z.len() != f.m() {
        return Err(Error::Dimension("solution does not belong to this problem".into()));
    }
    let slack = &f.h - f.gx(&x);
    let scale_b = 1.0 + f.b.norm();
    let scale_h = 1.0 + f.h.norm();
    let scale_c = 1.0 + f.c.norm();
    let primal = ((&f.a * &x - &f.b).norm() / scale_b).max(cone_violation(&f, &slack) / scale_h);
    let stationarity = &f.c + f.a.tr_mul(&s.y) + f.gtz(&s.z);
    let dual = (stationarity.norm() / scale_c).max(cone_violation(&f, &s.z) / scale_c);
    let complementarity = slack.dot(&s.z).abs() / (1.0 + f.c.dot(&x).abs());
    Ok(KktReport { primal, dual, complementarity })
}

fn embed_hermitian(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let h = (m + m.adjoint()) * cr(0.5);
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = cr(z.re);
            out[(i + n, j + n)] = cr(z.re);
            out[(i, j + n)] = cr(-z.im);
            out[(i + n, j)] = cr(z.im);
        }
    }
    out
}

/// Real symmetric embedding `[[Re X, -Im X], [Im X, Re X]]` of a Hermitian
/// matrix.
pub fn embed(x: &CMatrix) -> CMatrix {
    embed_hermitian(x)
}

/// Hermitian matrix represented by a real symmetric `2n x 2n` matrix `Y`:
/// `((Y11 + Y22) + i (Y21 - Y12)) / 2`.
pub fn unembed(y: &CMatrix) -> CMatrix {
    let n = y.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        let re = (y[(i, j)].re + y[(i + n, j + n)].re) / 2.0;
        let im = (y[(i + n, j)].re - y[(i, j + n)].re) / 2.0;
        Complex64::new(re, im)
    })
}

/// Rewrites `p` over real blocks only: Hermitian `n x n` blocks become real
/// symmetric `2n x 2n` blocks and complex vectors become real vectors of
/// stacked real and imaginary parts. Objective and constraint values are
/// preserved for every feasible point (map back with [`unembed_values`]).
pub fn real_embed(p: &SdpProblem) -> SdpProblem {
    let blocks: Vec<BlockKind> = p
        .blocks
        .iter()
        .map(|k| match *k {
            BlockKind::HermitianPsd(n) => BlockKind::SymmetricPsd(2 * n),
            BlockKind::ComplexFree(n) => BlockKind::RealFree(2 * n),
            other => other,
        })
        .collect();
    let map_expr = |e: &AffineExpr| -> AffineExpr {
        let mut out = AffineExpr::constant(e.constant);
        for (id, coeff) in &e.terms {
            let kind = p.blocks[id.0];
            let term = match (coeff, kind) {
                (Coeff::Matrix(m), BlockKind::HermitianPsd(_)) => {
                    AffineExpr::trace(*id, embed_hermitian(m) * cr(0.5))
                }
                (Coeff::Vector(v), BlockKind::ComplexFree(n)) => {
                    let mut r = DVector::zeros(2 * n);
                    for i in 0..n {
                        r[i] = v[i].re;
                        r[n + i] = v[i].im;
                    }
                    AffineExpr::real(*id, r)
                }
                (Coeff::Entry(i, f), BlockKind::HermitianPsd(n)) => {
                    AffineExpr::entry(*id, *i, f / 2.0) + AffineExpr::entry(*id, n + i, f / 2.0)
                }
                (other, _) => AffineExpr { terms: vec![(*id, other.clone())], constant: 0.0 },
            };
            out = out + term;
        }
        out
    };
    SdpProblem {
        blocks,
        objective: map_expr(&p.objective),
        constraints: p
            .constraints
            .iter()
            .map(|c| LinearConstraint { expr: map_expr(&c.expr), relation: c.relation, bound: c.bound })
            .collect(),
        socs: p
            .socs
            .iter()
            .map(|s| SocConstraint {
                rows: s.rows.iter().map(map_expr).collect(),
                bound: map_expr(&s.bound),
            })
            .collect(),
    }
}

/// Maps block values of [`real_embed`]`(p)` back to the blocks of `p`.
pub fn unembed_values(p: &SdpProblem, values: &[BlockValue]) -> Vec<BlockValue> {
    p.blocks
        .iter()
        .zip(values)
        .map(|(kind, v)| match (kind, v) {
            (BlockKind::HermitianPsd(_), BlockValue::Matrix(y)) => BlockValue::Matrix(unembed(y)),
            (BlockKind::ComplexFree(n), BlockValue::Real(r)) => {
                BlockValue::Vector(CVector::from_fn(*n, |i, _| c(r[i], r[n + i])))
            }
            (_, other) => other.clone(),
        })
        .collect()
}
