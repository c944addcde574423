//! Initialization: a feasible starting beamformer from the rank-relaxed
//! feasibility problem, and a closed-form sufficient feasibility check
//! based on zero-forcing with a uniformly amplifying RIS.

use rand::Rng;

use crate::channel::{seeded_rng, ChannelSet, Scenario};
use crate::conic::{self, AffineExpr, BlockKind, Relation, SdpProblem, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::matkernel::{
    cr, diag_matrix, fro, hermitian_inverse, hermitian_part, min_eig, outer, psd_sqrt_factor, trace, CMatrix, CVector,
};
use crate::sigmodel::{equivalent_channel, user_noise, BeamformerState};
use crate::txbf::ris_signal_budget;

/// Relative margin applied to the QoS threshold inside the solve so the
/// reconstructed point clears the exact constraint despite solver tolerance.
const QOS_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    /// Relaxed total covariance `R~`.
    pub r_tilde: CMatrix,
    /// Relaxed per-user covariances `R~_k`.
    pub r_k_tilde: Vec<CMatrix>,
    /// Constructed rank-one-feasible beamformer `[W_r, W_c]`.
    pub w0: CMatrix,
    /// RIS coefficients the problem was solved for.
    pub v: CVector,
    /// Constraint slacks of `w0`: one per user (relative), then BS power
    /// and RIS power (both relative to their budgets).
    pub slacks: Vec<f64>,
    /// QoS threshold (dB) actually enforced.
    pub xi_db: f64,
    /// True when the tightened threshold was infeasible and the nominal one
    /// was used instead.
    pub fell_back: bool,
}

impl FeasibilityResult {
    pub fn state(&self) -> BeamformerState {
        BeamformerState::new(self.w0.clone(), self.v.clone())
    }
}

struct Relaxed {
    r_r: CMatrix,
    r_k: Vec<CMatrix>,
}

fn solve_relaxed(chan: &ChannelSet, scen: &Scenario, v: &CVector, xi: f64, with_ris: bool) -> Result<Option<Relaxed>> {
    let m = chan.m_antennas();
    let k_users = chan.k_users();
    let noise = scen.noise();
    let mut p = SdpProblem::new();
    let rr = p.add_block(BlockKind::HermitianPsd(m));
    let rk: Vec<_> = (0..k_users).map(|_| p.add_block(BlockKind::HermitianPsd(m))).collect();
    p.maximize(AffineExpr::zero());

    // Covariances are solved in units of the BS power budget.
    let pb = scen.p_bs_w;
    let xi_eff = xi * (1.0 + QOS_MARGIN);
    for k in 0..k_users {
        let h = equivalent_channel(chan, v, k);
        let hn = h.norm_squared();
        if hn.sqrt() < 1e-12 {
            return Err(Error::DegenerateUser { user: k, reason: "equivalent channel is zero".into() });
        }
        let hh = outer(&h) * cr(1.0 / hn);
        // h^H R_k h >= xi (h^H (R - R_k) h + d_k), scaled so the worst
        // coefficient is O(1).
        let w = 1.0 / xi_eff.max(1.0);
        let mut expr = AffineExpr::trace(rr, &hh * cr(-xi_eff * w));
        for (j, &b) in rk.iter().enumerate() {
            let coef = if j == k { w } else { -xi_eff * w };
            expr = expr + AffineExpr::trace(b, &hh * cr(coef));
        }
        let bound = xi_eff * w * user_noise(chan, v, &noise, k) / (hn * pb);
        p.constrain(expr, Relation::Ge, bound);
    }

    let id = CMatrix::identity(m, m);
    let total = |c: &CMatrix| {
        rk.iter().fold(AffineExpr::trace(rr, c.clone()), |acc, &b| acc + AffineExpr::trace(b, c.clone()))
    };
    p.constrain(total(&id), Relation::Le, 1.0);

    let e = ris_signal_budget(chan, v, scen);
    if with_ris && e.is_finite() {
        if e <= 0.0 {
            return Ok(None);
        }
        let gram = ris_gram(chan, v);
        let scale = fro(&gram).max(1e-300);
        p.constrain(total(&(&gram * cr(1.0 / scale))), Relation::Le, e / (scale * pb));
    }

    let sol = conic::solve(&p, &SolverOptions::default())?;
    match sol.status {
        Status::Infeasible => return Ok(None),
        Status::Unbounded => return Err(Error::Solver("feasibility problem reported unbounded".into())),
        Status::NumericalLimit if sol.primal_residual > 1e-5 => {
            return Err(Error::Solver(format!(
                "feasibility solve stalled (primal residual {:.2e})",
                sol.primal_residual
            )))
        }
        _ => {}
    }
    let r_r = project_psd(sol.matrix(rr))?;
    let r_k: Vec<CMatrix> = rk.iter().map(|&b| project_psd(sol.matrix(b))).collect::<Result<_>>()?;
    let r_r = r_r * cr(pb);
    let r_k: Vec<CMatrix> = r_k.into_iter().map(|x| x * cr(pb)).collect();
    // The solver works to a relative tolerance; a margin far below it (a
    // threshold beyond the attainable SINR) must not pass for feasible.
    let total = r_k.iter().fold(r_r.clone(), |acc, r| acc + r);
    for (k, rk_mat) in r_k.iter().enumerate() {
        let h = equivalent_channel(chan, v, k);
        let own = h.dotc(&(rk_mat * &h)).re;
        let rest = h.dotc(&(&total * &h)).re - own + user_noise(chan, v, &noise, k);
        if own < xi * rest * (1.0 - 1e-9) {
            return Ok(None);
        }
    }
    Ok(Some(Relaxed { r_r, r_k }))
}

fn project_psd(x: &CMatrix) -> Result<CMatrix> {
    let f = psd_sqrt_factor(&hermitian_part(x))?;
    Ok(hermitian_part(&(&f * f.adjoint())))
}

/// `(Phi^H A Phi G)^H (Phi^H A Phi G) + (Phi G)^H (Phi G)`: the RIS signal
/// power is `Tr(gram R)`.
fn ris_gram(chan: &ChannelSet, v: &CVector) -> CMatrix {
    let phi = diag_matrix(v);
    let pag = phi.adjoint() * &chan.a * &phi * &chan.g;
    let pg = &phi * &chan.g;
    hermitian_part(&(pag.adjoint() * &pag + pg.adjoint() * &pg))
}

/// Solves the rank-relaxed feasibility problem at QoS threshold `xi_db` and
/// builds a rank-one-feasible starting beamformer from it.
pub fn solve_feasibility(chan: &ChannelSet, scen: &Scenario, v: &CVector, xi_db: f64) -> Result<FeasibilityResult> {
    if v.len() != chan.n_ris() {
        return Err(Error::Dimension(format!("v has length {}, expected {}", v.len(), chan.n_ris())));
    }
    let xi = crate::channel::db_to_lin(xi_db);
    let relaxed = match solve_relaxed(chan, scen, v, xi, true)? {
        Some(r) => r,
        None => {
            let e = ris_signal_budget(chan, v, scen);
            let family = if e <= 0.0 {
                "RIS power (noise alone exceeds the budget)"
            } else if solve_relaxed(chan, scen, v, xi, false)?.is_some() {
                "RIS power"
            } else {
                "user QoS under the BS power budget"
            };
            return Err(Error::Infeasible(format!("feasibility problem at {xi_db} dB: binding family is {family}")));
        }
    };
    let r_tilde = hermitian_part(&relaxed.r_k.iter().fold(relaxed.r_r.clone(), |acc, r| acc + r));
    let mut result = FeasibilityResult {
        r_tilde,
        r_k_tilde: relaxed.r_k,
        w0: CMatrix::zeros(chan.m_antennas(), chan.m_antennas() + chan.k_users()),
        v: v.clone(),
        slacks: vec![],
        xi_db,
        fell_back: false,
    };
    let m = chan.m_antennas();
    let mut w0 = CMatrix::zeros(m, m + chan.k_users());
    let mut r_hat = Vec::with_capacity(chan.k_users());
    for k in 0..chan.k_users() {
        let wc = construct_wc(&result, chan, k)?;
        r_hat.push(outer(&wc));
        w0.set_column(m + k, &wc);
    }
    let wr = construct_wr_from(&result.r_tilde, &r_hat)?;
    w0.columns_mut(0, m).copy_from(&wr);
    perturb_zero_columns(&mut w0, 0x5eed);
    result.w0 = w0;
    result.slacks = constraint_slacks(&result.state(), chan, scen, xi);
    Ok(result)
}

/// `w_k = R~_k h_k / sqrt(h_k^H R~_k h_k)`.
pub fn construct_wc(result: &FeasibilityResult, chan: &ChannelSet, k: usize) -> Result<CVector> {
    let rk = result
        .r_k_tilde
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("user {k} out of range")))?;
    let h = equivalent_channel(chan, &result.v, k);
    let rh = rk * &h;
    let q = h.dotc(&rh).re;
    if !(q > 0.0) {
        return Err(Error::DegenerateUser { user: k, reason: "zero received power in relaxed solution".into() });
    }
    Ok(rh * cr(1.0 / q.sqrt()))
}

/// Radar beams `W_r` with `W_r W_r^H = R~ - sum_k w_k w_k^H`.
pub fn construct_wr(result: &FeasibilityResult, chan: &ChannelSet) -> Result<CMatrix> {
    let r_hat = (0..result.r_k_tilde.len())
        .map(|k| construct_wc(result, chan, k).map(|w| outer(&w)))
        .collect::<Result<Vec<_>>>()?;
    construct_wr_from(&result.r_tilde, &r_hat)
}

fn construct_wr_from(r_tilde: &CMatrix, r_hat: &[CMatrix]) -> Result<CMatrix> {
    let rest = hermitian_part(&r_hat.iter().fold(r_tilde.clone(), |acc, r| acc - r));
    let scale = fro(r_tilde);
    let lam = min_eig(&rest)?;
    if lam < -1e-8 * scale {
        return Err(Error::NotPsd { min_eig: lam, tol: 1e-8 * scale });
    }
    psd_sqrt_factor(&rest)
}

fn perturb_zero_columns(w: &mut CMatrix, seed: u64) {
    let scale = fro(w).max(1.0) * 1e-9;
    let mut rng = seeded_rng(seed);
    for mut col in w.column_iter_mut() {
        if col.iter().all(|x| x.norm() == 0.0) {
            for x in col.iter_mut() {
                *x = crate::channel::crandn(&mut rng) * scale;
            }
        }
    }
    let _ = rng.random::<u8>();
}

fn constraint_slacks(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario, xi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..chan.k_users() {
        let s = crate::sigmodel::user_sinr(state, chan, scen, k).unwrap_or(0.0);
        out.push(s / xi - 1.0);
    }
    out.push(1.0 - fro(&state.w).powi(2) / scen.p_bs_w);
    if scen.p_ris_w.is_finite() {
        let p = crate::sigmodel::ris_tx_power(state, chan, scen).unwrap_or(f64::INFINITY);
        out.push(1.0 - p / scen.p_ris_w);
    }
    out
}

/// Feasibility at the tightened threshold `xi2_db`, falling back to the
/// nominal threshold when that fails.
pub fn tightened_init(chan: &ChannelSet, scen: &Scenario, v: &CVector, xi2_db: f64) -> Result<FeasibilityResult> {
    match solve_feasibility(chan, scen, v, xi2_db) {
        Ok(r) => Ok(r),
        Err(Error::Infeasible(reason)) => {
            log::warn!("tightened start at {xi2_db} dB infeasible ({reason}); using {} dB", scen.xi_db);
            let mut r = solve_feasibility(chan, scen, v, scen.xi_db)?;
            r.fell_back = true;
            Ok(r)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct Lemma2Report {
    pub rho: f64,
    pub rank_ok: bool,
    pub qos_power_ok: bool,
    pub rho_range_ok: bool,
    pub ris_power_ok: bool,
    /// Zero-forcing beamformer (M x K).
    pub w_star: CMatrix,
    /// Equivalent channels `h2_k + rho G^H h1_k` as columns.
    pub h_tilde: CMatrix,
    pub d_tilde: Vec<f64>,
    /// `1 - xi Tr(Diag(d) (H^H H)^-1) / P_BS`.
    pub qos_power_margin: f64,
    /// `1 - (RIS power of W*) / P_RIS`.
    pub ris_power_margin: f64,
    /// BS transmit power of `W*`.
    pub bs_power_w: f64,
    /// RIS transmit power of `W*` (zero for an unconstrained RIS).
    pub ris_power_w: f64,
}

impl Lemma2Report {
    pub fn feasible(&self) -> bool {
        self.rank_ok && self.qos_power_ok && self.rho_range_ok && self.ris_power_ok
    }

    /// RIS coefficients `rho * 1` of the uniform-amplification design.
    pub fn v(&self, n: usize) -> CVector {
        CVector::from_element(n, cr(self.rho))
    }

    /// Full beamformer `[0, W*]` (no dedicated radar beams).
    pub fn beamformer(&self) -> CMatrix {
        let m = self.w_star.nrows();
        let k = self.w_star.ncols();
        let mut w = CMatrix::zeros(m, m + k);
        w.columns_mut(m, k).copy_from(&self.w_star);
        w
    }
}

/// Evaluates the sufficient feasibility conditions for the design
/// `Phi = rho I` with zero-forcing user beams.
pub fn check_lemma2(chan: &ChannelSet, scen: &Scenario, rho: f64) -> Result<Lemma2Report> {
    if !rho.is_finite() {
        return Err(Error::Domain(format!("rho must be finite, got {rho}")));
    }
    let (m, n, k_users) = (chan.m_antennas(), chan.n_ris(), chan.k_users());
    let noise = scen.noise();
    let xi = scen.xi_lin();
    let h_tilde = CMatrix::from_fn(m, k_users, |i, k| {
        chan.h2[k][i] + (chan.g.adjoint() * &chan.h1[k])[i] * rho
    });
    let d_tilde: Vec<f64> = (0..k_users)
        .map(|k| chan.h1[k].norm_squared() * rho * rho * noise.ris + noise.ue)
        .collect();
    let rho_range_ok = rho >= 1.0 && rho <= scen.a_ris_lin().sqrt() * (1.0 + 1e-12);

    let mut report = Lemma2Report {
        rho,
        rank_ok: false,
        qos_power_ok: false,
        rho_range_ok,
        ris_power_ok: false,
        w_star: CMatrix::zeros(m, k_users),
        h_tilde: h_tilde.clone(),
        d_tilde: d_tilde.clone(),
        qos_power_margin: f64::NEG_INFINITY,
        ris_power_margin: f64::NEG_INFINITY,
        bs_power_w: f64::NAN,
        ris_power_w: f64::NAN,
    };
    if k_users > m {
        return Ok(report);
    }
    if k_users > 0 {
        let sv = h_tilde.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smax > 0.0) || smin <= smax * 1e-10 {
            return Ok(report);
        }
    }
    report.rank_ok = true;

    let gram_inv = if k_users > 0 { hermitian_inverse(&(h_tilde.adjoint() * &h_tilde))? } else { CMatrix::zeros(0, 0) };
    let dsq = CMatrix::from_diagonal(&CVector::from_iterator(k_users, d_tilde.iter().map(|d| cr(d.sqrt()))));
    let w_star = &h_tilde * &gram_inv * &dsq * cr(xi.sqrt());
    let bs_power: f64 = xi * (0..k_users).map(|k| d_tilde[k] * gram_inv[(k, k)].re).sum::<f64>();
    report.qos_power_margin = 1.0 - bs_power / scen.p_bs_w;
    report.qos_power_ok = report.qos_power_margin >= 0.0;

    let ris_power = if scen.p_ris_w.is_finite() {
        let ag = &chan.a * &chan.g * &w_star;
        let gw = &chan.g * &w_star;
        let rho2 = rho * rho;
        rho2 * rho2 * fro(&ag).powi(2)
            + rho2 * fro(&gw).powi(2)
            + 2.0 * n as f64 * rho2 * noise.ris
            + rho2 * rho2 * noise.ris * trace(&(&chan.a * chan.a.adjoint())).re
    } else {
        0.0
    };
    report.ris_power_margin =
        if scen.p_ris_w.is_finite() { 1.0 - ris_power / scen.p_ris_w } else { f64::INFINITY };
    report.ris_power_ok = report.ris_power_margin >= 0.0;
    report.bs_power_w = bs_power;
    report.ris_power_w = ris_power;
    report.w_star = w_star;
    Ok(report)
}

fn lemma2_score(r: &Lemma2Report) -> f64 {
    if !r.rank_ok {
        return f64::NEG_INFINITY;
    }
    r.qos_power_margin.min(r.ris_power_margin)
}

/// Searches `rho` in `[1, sqrt(a_RIS)]` for a point satisfying all four
/// conditions: a log-spaced scan followed by golden-section refinement of
/// the worst-condition margin around the best scan point.
pub fn search_lemma2_rho(chan: &ChannelSet, scen: &Scenario) -> Result<Lemma2Report> {
    let hi = scen.a_ris_lin().sqrt().max(1.0);
    let (lo_l, hi_l) = (0.0f64, hi.ln());
    const SCAN: usize = 48;
    let mut best: Option<(f64, Lemma2Report)> = None;
    let mut best_idx = 0;
    for i in 0..=SCAN {
        let x = lo_l + (hi_l - lo_l) * i as f64 / SCAN as f64;
        let r = check_lemma2(chan, scen, x.exp().clamp(1.0, hi))?;
        let s = lemma2_score(&r);
        if best.as_ref().map_or(true, |(b, _)| s > *b) {
            best = Some((s, r));
            best_idx = i;
        }
    }
    let (mut best_score, mut best_rep) = best.expect("scan is non-empty");
    if best_rep.feasible() || hi_l == 0.0 {
        return Ok(best_rep);
    }
    let step = (hi_l - lo_l) / SCAN as f64;
    let (mut a, mut b) = (
        (lo_l + step * (best_idx as f64 - 1.0)).max(lo_l),
        (lo_l + step * (best_idx as f64 + 1.0)).min(hi_l),
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |x: f64| -> Result<(f64, Lemma2Report)> {
        let r = check_lemma2(chan, scen, x.exp().clamp(1.0, hi))?;
        Ok((lemma2_score(&r), r))
    };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut rc) = eval(c)?;
    let (mut fd, mut rd) = eval(d)?;
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            rd = rc.clone();
            c = b - g * (b - a);
            (fc, rc) = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            rc = rd.clone();
            d = a + g * (b - a);
            (fd, rd) = eval(d)?;
        }
        for (s, r) in [(fc, &rc), (fd, &rd)] {
            if s > best_score {
                best_score = s;
                best_rep = r.clone();
            }
        }
        if best_rep.feasible() || (b - a) < 1e-10 {
            break;
        }
    }
    Ok(best_rep)
}
