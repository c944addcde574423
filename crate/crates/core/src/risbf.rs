//! RIS reflection step. With `W` fixed, the radar-SINR surrogate, the RIS
//! power and the user QoS constraints are rewritten as linear and
//! quadratic functions of the lifted matrix `V = [v; t][v; t]^H`; the rank
//! constraint is relaxed and the resulting SDP is solved, after which
//! Gaussian randomization recovers a feasible reflection vector.
//!
//! Vectors here follow the lifted convention: `v` holds the conjugated
//! diagonal of `Phi` (see [`crate::sigmodel::to_lifted`]). With
//! `v_hat = vec(V[..N, ..N])`, the building blocks satisfy
//!
//! ```text
//! v_hat^H n1           = Tr(B R B_i^H J_i^-1)
//! ||M1 v_hat||^2       = sigma^2 Tr(T_i G^H Phi^H A Phi Phi^H A^H Phi G)
//! Re(n2^H v_hat)       = Tr(T_i E R E^H)        (E = eta G^H Phi G)
//! ||M2 v_hat||^2       = Tr(Phi^H A Phi G R G^H Phi^H A^H Phi)
//! ||M3 v_hat||^2       = sigma^2 ||Phi^H A Phi||_F^2
//! h_k^H                = v_bar^H H_k
//! ```

use rand::Rng;

use crate::channel::{crandn, ChannelSet, Scenario};
use crate::conic::{self, AffineExpr, BlockId, BlockKind, Relation, SdpProblem, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::matkernel::{
    c, cr, eig_hermitian, hermitian_part, outer, trace, vec, CMatrix, CVector,
};
use crate::sigmodel::{self, from_lifted, to_lifted, BeamformerState};
use crate::txbf::{self, SurrogateContext};

/// Default number of Gaussian randomization candidates.
pub const DEFAULT_SAMPLES: usize = 200;

/// Lifted matrix `[v; t][v; t]^H`.
pub fn lift(v: &CVector, t: num_complex::Complex64) -> Result<CMatrix> {
    if (t.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("lifting variable must have unit modulus, got |t| = {}", t.norm())));
    }
    let n = v.len();
    let mut vb = CVector::zeros(n + 1);
    vb.rows_mut(0, n).copy_from(v);
    vb[n] = t;
    Ok(outer(&vb))
}

/// `vec` of the leading `N x N` block of a lifted matrix.
pub fn v_hat(v_bar: &CMatrix) -> CVector {
    let n = v_bar.nrows() - 1;
    vec(&v_bar.view((0, 0), (n, n)).into_owned())
}

/// Keeps the columns of a square-root factor carrying non-negligible energy.
fn truncated_factor(x: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = eig_hermitian(&hermitian_part(x))?;
    let top = vals.iter().copied().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > 1e-14 * top && vals[j] > 0.0).collect();
    let mut f = CMatrix::zeros(x.nrows(), keep.len());
    for (dst, &j) in keep.iter().enumerate() {
        let s = vals[j].sqrt();
        for i in 0..x.nrows() {
            f[(i, dst)] = vecs[(i, j)] * s;
        }
    }
    Ok(f)
}

/// `n1` with `v_hat^H n1 = Tr(B R B_i^H J_i^-1)`.
pub fn build_n1(ctx: &SurrogateContext, chan: &ChannelSet, r: &CMatrix) -> CVector {
    let k = &chan.g * r * ctx.echo.b.adjoint() * &ctx.j_i_inv * chan.g.adjoint();
    vec(&chan.a.transpose().component_mul(&k))
}

/// Quadratic pieces of `Tr(T_i J)`.
#[derive(Debug, Clone)]
pub struct Quadratics {
    pub m1: CMatrix,
    pub n2: CVector,
    /// `G T_i G^H`.
    pub gtig: CMatrix,
}

pub fn build_quadratics(ctx: &SurrogateContext, chan: &ChannelSet, r: &CMatrix, scen: &Scenario) -> Result<Quadratics> {
    let n = chan.n_ris();
    let sigma = scen.noise().ris.sqrt();
    let gtig = hermitian_part(&(&chan.g * &ctx.t_i * chan.g.adjoint()));
    let f = truncated_factor(&gtig)?;
    let rank = f.ncols();
    // (F^H (A o V))_{pb} = sum_a conj(F_ap) A_ab V_ab
    let mut m1 = CMatrix::zeros(rank * n, n * n);
    for b in 0..n {
        for p in 0..rank {
            for a in 0..n {
                m1[(p + rank * b, a + n * b)] = f[(a, p)].conj() * chan.a[(a, b)] * sigma;
            }
        }
    }
    let grg = &chan.g * r * chan.g.adjoint();
    let eta2 = scen.eta * scen.eta;
    let n2 = vec(&grg.component_mul(&gtig.transpose())) * cr(eta2);
    Ok(Quadratics { m1, n2, gtig })
}

/// Quadratic and linear pieces of the RIS transmit power.
#[derive(Debug, Clone)]
pub struct PowerTerms {
    pub m2: CMatrix,
    pub m3: CMatrix,
    /// `G R G^H`; its diagonal weights `|v_n|^2`.
    pub grg: CMatrix,
    /// Coefficient `2 sigma^2` of `Tr(V_hat)`.
    pub noise_coeff: f64,
}

impl PowerTerms {
    /// RIS power evaluated on a lifted matrix.
    pub fn evaluate(&self, v_bar: &CMatrix) -> f64 {
        let n = v_bar.nrows() - 1;
        let vh = v_hat(v_bar);
        let lin: f64 = (0..n).map(|a| v_bar[(a, a)].re * (self.grg[(a, a)].re + self.noise_coeff)).sum();
        (&self.m2 * &vh).norm_squared() + (&self.m3 * &vh).norm_squared() + lin
    }
}

pub fn build_power_terms(chan: &ChannelSet, r: &CMatrix, scen: &Scenario) -> Result<PowerTerms> {
    let n = chan.n_ris();
    let sigma2 = scen.noise().ris;
    let grg = hermitian_part(&(&chan.g * r * chan.g.adjoint()));
    let l = truncated_factor(&grg)?;
    let rank = l.ncols();
    // (Y L)_{aq} = sum_b A_ab V_ab L_bq, with Tr(Y S Y^H) = ||Y L||_F^2.
    let mut m2 = CMatrix::zeros(n * rank, n * n);
    for q in 0..rank {
        for a in 0..n {
            for b in 0..n {
                m2[(a + n * q, a + n * b)] = chan.a[(a, b)] * l[(b, q)];
            }
        }
    }
    let m3 = CMatrix::from_diagonal(&(vec(&chan.a) * cr(sigma2.sqrt())));
    Ok(PowerTerms { m2, m3, grg, noise_coeff: 2.0 * sigma2 })
}

/// Lifted QoS data of one user.
#[derive(Debug, Clone)]
pub struct CommLift {
    /// `H_k` with `h_k^H = v_bar^H H_k`, `(N+1) x M`.
    pub h: CMatrix,
    /// `H_k R H_k^H`.
    pub r1: CMatrix,
    /// `H_k w_k w_k^H H_k^H`.
    pub r2: CMatrix,
    /// Per-element RIS noise weights `sigma^2 |h1_kn|^2`.
    pub noise_diag: Vec<f64>,
    /// UE noise `sigma_z^2`.
    pub noise_const: f64,
}

impl CommLift {
    /// `(1 + 1/xi) Tr(R2 V) - Tr(R1 V) - noise(V)`; non-negative iff the
    /// user's QoS holds at a rank-one `V`.
    pub fn margin(&self, v_bar: &CMatrix, xi: f64) -> f64 {
        let noise: f64 = self.noise_diag.iter().enumerate().map(|(a, w)| w * v_bar[(a, a)].re).sum::<f64>()
            + self.noise_const;
        (1.0 + 1.0 / xi) * trace(&(&self.r2 * v_bar)).re - trace(&(&self.r1 * v_bar)).re - noise
    }
}

pub fn build_comm_lift(chan: &ChannelSet, w: &CMatrix, scen: &Scenario) -> Vec<CommLift> {
    let (m, n) = (chan.m_antennas(), chan.n_ris());
    let noise = scen.noise();
    let r = w * w.adjoint();
    (0..chan.k_users())
        .map(|k| {
            let h1 = &chan.h1[k];
            let mut h = CMatrix::zeros(n + 1, m);
            for a in 0..n {
                for j in 0..m {
                    h[(a, j)] = h1[a].conj() * chan.g[(a, j)];
                }
            }
            for j in 0..m {
                h[(n, j)] = chan.h2[k][j].conj();
            }
            let wk = w.column(m + k).into_owned();
            let hw = &h * &wk;
            CommLift {
                r1: hermitian_part(&(&h * &r * h.adjoint())),
                r2: outer(&hw),
                h,
                noise_diag: h1.iter().map(|x| x.norm_sqr() * noise.ris).collect(),
                noise_const: noise.ue,
            }
        })
        .collect()
}

/// All lifted data of one RIS step, built from a single `(W, Phi_i)`.
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub n: usize,
    pub n1: CVector,
    pub quad: Quadratics,
    pub power: PowerTerms,
    pub comm: Vec<CommLift>,
    /// Beamformer the problem was built for.
    pub w: CMatrix,
    /// RIS coefficients (diagonal of `Phi`) at the expansion point.
    pub v_i: CVector,
    pub sigma2: f64,
    /// `sigma_r^2 Tr(T_i)`.
    pub const_term: f64,
    pub a_ris: f64,
    pub p_ris: f64,
    pub xi: f64,
    /// Radar SINR at the expansion point (objective normalization).
    pub sinr_i: f64,
}

pub fn build_lifted(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<LiftedProblem> {
    let ctx = txbf::build_context(state, chan, scen)?;
    let r = state.covariance();
    let noise = scen.noise();
    Ok(LiftedProblem {
        n: chan.n_ris(),
        n1: build_n1(&ctx, chan, &r),
        quad: build_quadratics(&ctx, chan, &r, scen)?,
        power: build_power_terms(chan, &r, scen)?,
        comm: build_comm_lift(chan, &state.w, scen),
        w: state.w.clone(),
        v_i: state.v.clone(),
        sigma2: noise.ris,
        const_term: noise.bs * trace(&ctx.t_i).re,
        a_ris: scen.a_ris_lin(),
        p_ris: scen.p_ris_w,
        xi: scen.xi_lin(),
        sinr_i: ctx.sinr_i,
    })
}

impl LiftedProblem {
    /// Surrogate objective on a lifted matrix.
    pub fn objective(&self, v_bar: &CMatrix) -> f64 {
        let vh = v_hat(v_bar);
        let lin = 2.0 * vh.dotc(&self.n1).re - vh.dotc(&self.quad.n2).re;
        let diag: f64 = (0..self.n).map(|a| self.quad.gtig[(a, a)].re * v_bar[(a, a)].re).sum();
        lin - (&self.quad.m1 * &vh).norm_squared() - self.sigma2 * diag - self.const_term
    }
}

/// Trace coefficient `C` (on the `(N+1)`-dimensional lifted block) of the
/// complex functional `row . v_hat`.
fn row_coeff(row: impl Iterator<Item = (usize, num_complex::Complex64)>, n: usize) -> CMatrix {
    let mut cm = CMatrix::zeros(n + 1, n + 1);
    for (i, val) in row {
        let (a, b) = (i % n, i / n);
        cm[(b, a)] += val;
    }
    cm
}

/// Trace coefficient of `Re(v_hat^H x)`.
fn hvec_coeff(x: &CVector, n: usize) -> CMatrix {
    let mut cm = CMatrix::zeros(n + 1, n + 1);
    for b in 0..n {
        for a in 0..n {
            cm[(a, b)] = x[a + n * b];
        }
    }
    cm
}

fn diag_coeff(weights: impl Iterator<Item = f64>, n: usize) -> CMatrix {
    let mut cm = CMatrix::zeros(n + 1, n + 1);
    for (a, w) in weights.enumerate() {
        cm[(a, a)] = cr(w);
    }
    cm
}

/// The assembled relaxation with the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct RisSdp {
    pub problem: SdpProblem,
    pub v_bar: BlockId,
    /// The solver variable is `D^-1 V D^-1` with `D = diag(scale)`.
    pub scale: Vec<f64>,
    /// Objective normalization: the solver maximizes `objective / norm`.
    pub norm: f64,
}

impl RisSdp {
    /// Lifted matrix in original units from a solver value.
    pub fn unscale(&self, x: &CMatrix) -> CMatrix {
        CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (self.scale[i] * self.scale[j]))
    }
}

/// Builds the rank-relaxed RIS problem: maximize the surrogate over
/// Hermitian PSD `V` subject to the RIS power budget, user QoS, per-element
/// gain caps and `V[N, N] = 1`.
pub fn assemble_ris_sdp(lp: &LiftedProblem) -> Result<RisSdp> {
    let n = lp.n;
    if lp.n1.len() != n * n || lp.quad.m1.ncols() != n * n || lp.power.m2.ncols() != n * n {
        return Err(Error::Dimension("lifted terms do not share one RIS dimension".into()));
    }
    // Scale the element block to O(1): by the gain cap, or without one by
    // the largest per-element magnitude the power budget allows.
    let power_cap = (0..n)
        .map(|a| lp.p_ris / (lp.power.grg[(a, a)].re + lp.power.noise_coeff))
        .fold(0.0, f64::max);
    let d2 = lp.a_ris.min(power_cap);
    if !d2.is_finite() {
        return Err(Error::Domain("RIS gain is unbounded: no gain cap and no power budget".into()));
    }
    let d = if d2 > 0.0 { d2.sqrt() } else { 1.0 };
    let mut scale = vec![d; n + 1];
    scale[n] = 1.0;
    let sc = |cm: CMatrix| CMatrix::from_fn(n + 1, n + 1, |i, j| cm[(i, j)] * (scale[i] * scale[j]));
    let lift_i = lift(&to_lifted(&lp.v_i), cr(1.0))?;
    let gamma = if lp.sinr_i > 0.0 { lp.sinr_i } else { 1.0 };

    let mut p = SdpProblem::new();
    let vb = p.add_block(BlockKind::HermitianPsd(n + 1));
    let ub = p.add_block(BlockKind::RealFree(1));

    // Objective / gamma.
    let mut lin = hvec_coeff(&lp.n1, n) * cr(2.0) - hvec_coeff(&lp.quad.n2, n);
    lin -= diag_coeff((0..n).map(|a| lp.sigma2 * lp.quad.gtig[(a, a)].re), n);
    p.maximize(
        AffineExpr::trace(vb, sc(lin) * cr(1.0 / gamma)) - AffineExpr::entry(ub, 0, 1.0)
            + AffineExpr::constant(-lp.const_term / gamma),
    );
    let wq = 1.0 / gamma.sqrt();
    let rows = quadratic_rows(vb, &lp.quad.m1, n, wq, &sc);
    p.add_squared_norm_bound(rows, AffineExpr::entry(ub, 0, 1.0));

    // RIS power, normalized by the budget.
    if lp.p_ris.is_finite() {
        let wp = 1.0 / lp.p_ris.sqrt();
        let mut rows = quadratic_rows(vb, &lp.power.m2, n, wp, &sc);
        rows.extend(quadratic_rows(vb, &lp.power.m3, n, wp, &sc));
        let lin = diag_coeff((0..n).map(|a| (lp.power.grg[(a, a)].re + lp.power.noise_coeff) / lp.p_ris), n);
        p.add_squared_norm_bound(rows, AffineExpr::constant(1.0) - AffineExpr::trace(vb, sc(lin)));
    }

    // QoS, normalized by the current interference-plus-noise.
    for cl in &lp.comm {
        let noise_c = diag_coeff(cl.noise_diag.iter().copied(), n);
        let norm = (trace(&(&cl.r1 * &lift_i)).re + trace(&(&noise_c * &lift_i)).re + cl.noise_const).max(1e-300);
        let coeff = (&cl.r2 * cr(1.0 + 1.0 / lp.xi) - &cl.r1 - noise_c) * cr(1.0 / norm);
        p.constrain(AffineExpr::trace(vb, sc(coeff)), Relation::Ge, cl.noise_const / norm);
    }

    // Gain caps and the lifting entry.
    if lp.a_ris.is_finite() {
        let cap = if lp.a_ris > 0.0 { lp.a_ris / (d * d) } else { 0.0 };
        for a in 0..n {
            p.constrain(AffineExpr::entry(vb, a, 1.0), Relation::Le, cap);
        }
    }
    p.constrain(AffineExpr::entry(vb, n, 1.0), Relation::Eq, 1.0);
    Ok(RisSdp { problem: p, v_bar: vb, scale, norm: gamma })
}

/// Real and imaginary rows of `weight * (M v_hat)` as trace functionals.
fn quadratic_rows(
    vb: BlockId,
    m: &CMatrix,
    n: usize,
    weight: f64,
    sc: &dyn Fn(CMatrix) -> CMatrix,
) -> Vec<AffineExpr> {
    let mut rows = Vec::with_capacity(2 * m.nrows());
    for i in 0..m.nrows() {
        let nz = (0..m.ncols()).filter(|&j| m[(i, j)] != cr(0.0)).map(|j| (j, m[(i, j)] * weight));
        let cm = sc(row_coeff(nz, n));
        if cm.iter().all(|x| *x == cr(0.0)) {
            continue;
        }
        rows.push(AffineExpr::trace(vb, cm.clone()));
        rows.push(AffineExpr::trace(vb, cm * c(0.0, -1.0)));
    }
    rows
}

/// Outcome of one RIS step.
#[derive(Debug, Clone)]
pub struct RisStep {
    /// Diagonal of the new `Phi` (unchanged if no candidate improved).
    pub v: CVector,
    pub accepted: bool,
    /// Optimal value of the relaxation (surrogate units).
    pub sdr_value: f64,
    /// Relaxed optimum in original units.
    pub v_bar: CMatrix,
    pub status: Status,
}

/// Solves the relaxation at `state` and returns the randomized candidate
/// if it does not decrease the exact radar SINR.
pub fn optimize_v<R: Rng + ?Sized>(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<RisStep> {
    let lp = build_lifted(state, chan, scen)?;
    let sdp = assemble_ris_sdp(&lp)?;
    let sol = conic::solve(&sdp.problem, &SolverOptions::default())?;
    let keep = |status, v_bar: CMatrix, value| RisStep {
        v: state.v.clone(),
        accepted: false,
        sdr_value: value,
        v_bar,
        status,
    };
    match sol.status {
        Status::Infeasible | Status::Unbounded => {
            log::debug!("RIS relaxation returned {:?}; keeping v", sol.status);
            return Ok(keep(sol.status, CMatrix::zeros(lp.n + 1, lp.n + 1), f64::NAN));
        }
        Status::NumericalLimit if sol.primal_residual.max(sol.dual_residual) > 1e-5 => {
            log::debug!("RIS relaxation stalled; keeping v");
            return Ok(keep(sol.status, CMatrix::zeros(lp.n + 1, lp.n + 1), f64::NAN));
        }
        _ => {}
    }
    let v_bar = hermitian_part(&sdp.unscale(sol.matrix(sdp.v_bar)));
    let sdr_value = sol.objective * sdp.norm;
    let current = sigmodel::radar_sinr(state, chan, scen)?;
    match gaussian_randomize(&v_bar, &lp, chan, scen, samples, rng) {
        Ok(v) => {
            let cand = BeamformerState::new(state.w.clone(), v.clone());
            if sigmodel::radar_sinr(&cand, chan, scen)? >= current {
                Ok(RisStep { v, accepted: true, sdr_value, v_bar, status: sol.status })
            } else {
                Ok(keep(sol.status, v_bar, sdr_value))
            }
        }
        Err(Error::Randomization { .. }) => Ok(keep(sol.status, v_bar, sdr_value)),
        Err(e) => Err(e),
    }
}

/// Gaussian randomization. Candidate 0 is the principal eigenvector; the
/// rest are drawn from `CN(0, V)`. Each is normalized so the lifting entry
/// is 1, magnitudes are clipped to `sqrt(a_RIS)`, and the vector is scaled
/// down until the RIS power budget holds. Returns the diagonal of `Phi`
/// for the feasible candidate with the highest exact radar SINR.
pub fn gaussian_randomize<R: Rng + ?Sized>(
    v_bar: &CMatrix,
    lp: &LiftedProblem,
    chan: &ChannelSet,
    scen: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<CVector> {
    let n = lp.n;
    if v_bar.nrows() != n + 1 || v_bar.ncols() != n + 1 {
        return Err(Error::Dimension("lifted matrix has the wrong size".into()));
    }
    let (vals, vecs) = eig_hermitian(&hermitian_part(v_bar))?;
    let sqrt_vals: Vec<f64> = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let top = n; // eigenvalues ascending
    let cap = lp.a_ris.sqrt();

    let mut best: Option<(f64, CVector)> = None;
    let mut best_infeasible: Option<(f64, CVector)> = None;
    for idx in 0..samples.max(1) {
        let xi_vec: CVector = if idx == 0 {
            vecs.column(top) * cr(sqrt_vals[top])
        } else {
            let r = CVector::from_fn(n + 1, |_, _| crandn(rng));
            let mut out = CVector::zeros(n + 1);
            for j in 0..=n {
                out += vecs.column(j) * (r[j] * sqrt_vals[j]);
            }
            out
        };
        let tail = xi_vec[n];
        if tail.norm() < 1e-300 {
            continue;
        }
        let mut v_lift = xi_vec.rows(0, n) / tail;
        for x in v_lift.iter_mut() {
            let mag = x.norm();
            if mag > cap {
                *x *= cap / mag;
            }
        }
        let mut v = from_lifted(&v_lift.into_owned());
        if lp.p_ris.is_finite() {
            v = scale_to_budget(&v, &lp.w, chan, scen)?;
        }
        let cand = BeamformerState::new(lp.w.clone(), v.clone());
        let report = sigmodel::metrics(&cand, chan, scen)?;
        let score = report.radar_sinr;
        if report.feasible {
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, v));
            }
        } else if best_infeasible.as_ref().map_or(true, |(s, _)| report.slacks.min() > *s) {
            best_infeasible = Some((report.slacks.min(), v));
        }
    }
    match best {
        Some((_, v)) => Ok(v),
        None => Err(Error::Randomization {
            samples,
            best_infeasible: best_infeasible.map(|(_, v)| v.iter().copied().collect()),
        }),
    }
}

/// Largest `s <= 1` with `P_RIS(s v) <= P_RIS`, using that the RIS power is
/// `alpha s^4 + beta s^2` along a ray.
fn scale_to_budget(v: &CVector, w: &CMatrix, chan: &ChannelSet, scen: &Scenario) -> Result<CVector> {
    let p = |x: &CVector| sigmodel::ris_tx_power(&BeamformerState::new(w.clone(), x.clone()), chan, scen);
    let p1 = p(v)?;
    if p1 <= scen.p_ris_w {
        return Ok(v.clone());
    }
    let p2 = p(&(v * cr(std::f64::consts::SQRT_2)))?;
    let alpha = ((p2 - 2.0 * p1) / 2.0).max(0.0);
    let beta = (p1 - alpha).max(0.0);
    let budget = scen.p_ris_w;
    let s2 = if alpha > 0.0 {
        2.0 * budget / (beta + (beta * beta + 4.0 * alpha * budget).sqrt())
    } else {
        budget / beta
    };
    let s = (s2 * (1.0 - 1e-9)).sqrt().min(1.0);
    Ok(v * cr(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::{diag_matrix, fro, testutil::*};
    use crate::sigmodel::{metrics, radar_sinr};

    fn setup(seed: u64) -> (Scenario, ChannelSet, BeamformerState) {
        let scen = Scenario { xi_db: 0.0, ..Scenario::default() };
        let chan = ChannelSet::from_seed(&scen, seed).unwrap();
        let v = CVector::from_element(scen.n_ris, cr(5.0));
        let init = crate::feasinit::solve_feasibility(&chan, &scen, &v, scen.xi_db).unwrap();
        (scen, chan, init.state())
    }

    fn random_v(r: &mut rand_chacha::ChaCha8Rng, n: usize, amp: f64) -> CVector {
        rand_vector(r, n) * cr(amp)
    }

    #[test]
    fn lift_examples() {
        let ones = CVector::from_element(3, cr(1.0));
        let vb = lift(&ones, cr(1.0)).unwrap();
        assert!(vb.iter().all(|x| (*x - cr(1.0)).norm() < 1e-15));
        let vb = lift(&CVector::zeros(3), cr(1.0)).unwrap();
        assert_eq!(vb[(3, 3)], cr(1.0));
        assert_eq!(fro(&vb), 1.0);
        assert!(matches!(lift(&ones, cr(2.0)), Err(Error::Domain(_))));
        let mut r = rng(1);
        let v = rand_vector(&mut r, 4);
        let vh = v_hat(&lift(&v, c(0.6, 0.8)).unwrap());
        assert!((vh - vec(&outer(&v))).norm() < 1e-14);
    }

    #[test]
    fn linear_and_quadratic_terms_match_direct_evaluation() {
        let (scen, chan, st) = setup(2);
        let ctx = txbf::build_context(&st, &chan, &scen).unwrap();
        let r = st.covariance();
        let noise = scen.noise();
        let n1 = build_n1(&ctx, &chan, &r);
        let quad = build_quadratics(&ctx, &chan, &r, &scen).unwrap();
        let mut rg = rng(3);
        for _ in 0..100 {
            let vd = random_v(&mut rg, scen.n_ris, 3.0);
            let vb = lift(&to_lifted(&vd), cr(1.0)).unwrap();
            let vh = v_hat(&vb);
            let echo = sigmodel::echo_matrices(&chan, &vd, &noise, scen.eta);
            let want = trace(&(&echo.b * &r * ctx.echo.b.adjoint() * &ctx.j_i_inv));
            let got = vh.dotc(&n1);
            assert!((got - want).norm() <= 1e-8 * want.norm());

            let phi = diag_matrix(&vd);
            let y = phi.adjoint() * &chan.a * &phi;
            let want = noise.ris * trace(&(&ctx.t_i * chan.g.adjoint() * &y * y.adjoint() * &chan.g)).re;
            let got = (&quad.m1 * &vh).norm_squared();
            assert!((got - want).abs() <= 1e-8 * want.abs());

            let ere = &echo.e * &r * echo.e.adjoint();
            let want = trace(&(&ctx.t_i * ere)).re;
            let got = quad.n2.dotc(&vh).re;
            assert!((got - want).abs() <= 1e-8 * want.abs());
        }
    }

    #[test]
    fn zero_a_and_zero_t() {
        let (scen, mut chan, st) = setup(4);
        chan.a = CMatrix::zeros(scen.n_ris, scen.n_ris);
        let ctx = txbf::build_context(&st, &chan, &scen).unwrap();
        assert_eq!(build_n1(&ctx, &chan, &st.covariance()).norm(), 0.0);
        let mut z = st.clone();
        z.v = CVector::zeros(scen.n_ris);
        let ctx = txbf::build_context(&z, &chan, &scen).unwrap();
        let q = build_quadratics(&ctx, &chan, &z.covariance(), &scen).unwrap();
        assert_eq!(q.m1.nrows(), 0);
        assert_eq!(q.n2.norm(), 0.0);
        assert_eq!(fro(&q.gtig), 0.0);
    }

    #[test]
    fn power_terms_match_signal_model() {
        let (scen, chan, st) = setup(5);
        let pt = build_power_terms(&chan, &st.covariance(), &scen).unwrap();
        let mut rg = rng(6);
        for _ in 0..100 {
            let vd = random_v(&mut rg, scen.n_ris, 4.0);
            let vb = lift(&to_lifted(&vd), cr(1.0)).unwrap();
            let want = sigmodel::ris_tx_power(&BeamformerState::new(st.w.clone(), vd), &chan, &scen).unwrap();
            assert!((pt.evaluate(&vb) - want).abs() <= 1e-8 * want);
        }
        let zero = lift(&CVector::zeros(scen.n_ris), cr(1.0)).unwrap();
        assert_eq!(pt.evaluate(&zero), 0.0);
    }

    #[test]
    fn comm_lift_matches_qos() {
        let (scen, chan, st) = setup(7);
        let xi = scen.xi_lin();
        let mut rg = rng(8);
        for _ in 0..100 {
            let vd = random_v(&mut rg, scen.n_ris, 4.0);
            let w = rand_matrix(&mut rg, 4, 6) * cr(0.3);
            let lifts = build_comm_lift(&chan, &w, &scen);
            let vb = lift(&to_lifted(&vd), cr(1.0)).unwrap();
            let cand = BeamformerState::new(w.clone(), vd.clone());
            for (k, cl) in lifts.iter().enumerate() {
                let h = sigmodel::equivalent_channel(&chan, &vd, k);
                let vbar = {
                    let mut x = CVector::zeros(scen.n_ris + 1);
                    x.rows_mut(0, scen.n_ris).copy_from(&to_lifted(&vd));
                    x[scen.n_ris] = cr(1.0);
                    x
                };
                assert!((cl.h.adjoint() * &vbar - &h).norm() <= 1e-12 * h.norm());
                let s = sigmodel::user_sinr(&cand, &chan, &scen, k).unwrap();
                let dk = sigmodel::user_noise(&chan, &vd, &scen.noise(), k);
                let interf = (w.adjoint() * &h).norm_squared() - h.dotc(&w.column(4 + k)).norm_sqr() + dk;
                let want = (s - xi) / xi * interf;
                let got = cl.margin(&vb, xi);
                assert!((got - want).abs() <= 1e-8 * interf * (1.0 + s / xi));
            }
        }
        let scen0 = Scenario { k_users: 0, ue_pos_m: vec![], ..Scenario::default() };
        let chan0 = ChannelSet::from_seed(&scen0, 1).unwrap();
        assert!(build_comm_lift(&chan0, &CMatrix::zeros(4, 4), &scen0).is_empty());
        // Direct-link-only channel at v = 0.
        let lifts = build_comm_lift(&chan, &st.w, &scen);
        let e = {
            let mut x = CVector::zeros(scen.n_ris + 1);
            x[scen.n_ris] = cr(1.0);
            x
        };
        assert!((lifts[0].h.adjoint() * e - &chan.h2[0]).norm() < 1e-15);
    }

    #[test]
    fn lifted_objective_is_tangent_surrogate() {
        let (scen, chan, st) = setup(9);
        let lp = build_lifted(&st, &chan, &scen).unwrap();
        let vb = lift(&to_lifted(&st.v), cr(1.0)).unwrap();
        let exact = radar_sinr(&st, &chan, &scen).unwrap();
        assert!((lp.objective(&vb) - exact).abs() <= 1e-8 * exact);
        let mut rg = rng(10);
        for _ in 0..50 {
            let vd = random_v(&mut rg, scen.n_ris, 5.0);
            let vb = lift(&to_lifted(&vd), cr(1.0)).unwrap();
            let g = radar_sinr(&BeamformerState::new(st.w.clone(), vd), &chan, &scen).unwrap();
            assert!(lp.objective(&vb) <= g * (1.0 + 1e-9) + 1e-12 * exact);
        }
    }

    #[test]
    fn relaxation_bounds_rank_one_points() {
        let (scen, chan, st) = setup(11);
        let lp = build_lifted(&st, &chan, &scen).unwrap();
        let sdp = assemble_ris_sdp(&lp).unwrap();
        let sol = conic::solve(&sdp.problem, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let kkt = conic::kkt_report(&sdp.problem, &sol).unwrap();
        assert!(kkt.max() <= 1e-6, "{kkt:?}");
        let value = sol.objective * sdp.norm;
        let here = lift(&to_lifted(&st.v), cr(1.0)).unwrap();
        assert!(value >= lp.objective(&here) * (1.0 - 1e-6));
        let mut rg = rng(12);
        for _ in 0..30 {
            let vd = random_v(&mut rg, scen.n_ris, 2.0);
            let cand = BeamformerState::new(st.w.clone(), vd.clone());
            if metrics(&cand, &chan, &scen).unwrap().feasible {
                let vb = lift(&to_lifted(&vd), cr(1.0)).unwrap();
                assert!(value >= lp.objective(&vb) - 1e-6 * value.abs());
            }
        }
        // Solver value agrees with the direct objective on the returned matrix.
        let vbar = sdp.unscale(sol.matrix(sdp.v_bar));
        assert!((lp.objective(&vbar) - value).abs() <= 1e-5 * value.abs());
    }

    #[test]
    fn zero_gain_cap_forces_zero_reflection() {
        let (scen, chan, st) = setup(13);
        let mut lp = build_lifted(&st, &chan, &scen).unwrap();
        lp.a_ris = 0.0;
        lp.comm.clear();
        let sdp = assemble_ris_sdp(&lp).unwrap();
        let sol = conic::solve(&sdp.problem, &SolverOptions::default()).unwrap();
        let vbar = sdp.unscale(sol.matrix(sdp.v_bar));
        let mut e = CMatrix::zeros(scen.n_ris + 1, scen.n_ris + 1);
        e[(scen.n_ris, scen.n_ris)] = cr(1.0);
        assert!(fro(&(vbar - e)) < 1e-5);
    }

    #[test]
    fn randomization_recovers_rank_one_and_stays_feasible() {
        let (scen, chan, st) = setup(14);
        let lp = build_lifted(&st, &chan, &scen).unwrap();
        let vb = lift(&to_lifted(&st.v), cr(1.0)).unwrap();
        let v = gaussian_randomize(&vb, &lp, &chan, &scen, 1, &mut rng(15)).unwrap();
        assert!((&v - &st.v).norm() <= 1e-9 * st.v.norm());

        let step = optimize_v(&st, &chan, &scen, DEFAULT_SAMPLES, &mut rng(16)).unwrap();
        let cand = BeamformerState::new(st.w.clone(), step.v.clone());
        let rep = metrics(&cand, &chan, &scen).unwrap();
        assert!(rep.feasible, "{:?}", rep.slacks);
        assert!(step.v.iter().all(|x| x.norm_sqr() <= scen.a_ris_lin() * (1.0 + 1e-9)));
        assert!(rep.radar_sinr >= radar_sinr(&st, &chan, &scen).unwrap());
        let lp_vstar = lp.objective(&lift(&to_lifted(&step.v), cr(1.0)).unwrap());
        assert!(step.sdr_value >= lp_vstar - 1e-6 * step.sdr_value.abs());
    }
}
