//! BS beamforming step: the minorizing surrogate of the radar SINR, the
//! successive convex approximation of the user QoS constraints, and the
//! second-order-cone program that updates `W` with the RIS fixed.

use num_complex::Complex64;

use crate::channel::{ChannelSet, Scenario};
use crate::conic::{self, AffineExpr, BlockId, BlockKind, SdpProblem, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::matkernel::{cr, fro, hermitian_inverse, hermitian_part, psd_sqrt_factor, trace, CMatrix, CVector};
use crate::sigmodel::{self, equivalent_channel, user_noise, BeamformerState, EchoMatrices};

/// Quantities frozen at the expansion point `W_i` of the surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateContext {
    /// `X_i = B W_i`.
    pub x_i: CMatrix,
    /// `J_i = J(R_i)`.
    pub j_i: CMatrix,
    pub j_i_inv: CMatrix,
    /// `T_i = J_i^-1 B R_i B^H J_i^-1`.
    pub t_i: CMatrix,
    /// Echo matrices at the fixed RIS configuration.
    pub echo: EchoMatrices,
    /// Beamformer at the expansion point.
    pub w_i: CMatrix,
    /// Radar SINR at the expansion point.
    pub sinr_i: f64,
}

pub fn build_context(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<SurrogateContext> {
    state.check_dims(chan)?;
    let echo = sigmodel::echo_matrices(chan, &state.v, &scen.noise(), scen.eta);
    let r_i = state.covariance();
    let j_i = hermitian_part(&echo.j(&r_i));
    let j_i_inv = hermitian_inverse(&j_i)?;
    let x_i = &echo.b * &state.w;
    let t_i = hermitian_part(&(&j_i_inv * &x_i * x_i.adjoint() * &j_i_inv));
    let sinr_i = trace(&(x_i.adjoint() * &j_i_inv * &x_i)).re.max(0.0);
    Ok(SurrogateContext { x_i, j_i, j_i_inv, t_i, echo, w_i: state.w.clone(), sinr_i })
}

/// Surrogate `f(W) = 2 Re Tr(X_i^H J_i^-1 B W) - Tr(T_i J(W W^H))`.
pub fn surrogate_value(ctx: &SurrogateContext, w: &CMatrix) -> f64 {
    let linear = 2.0 * trace(&(ctx.x_i.adjoint() * &ctx.j_i_inv * &ctx.echo.b * w)).re;
    let r = w * w.adjoint();
    let penalty = trace(&(&ctx.t_i * ctx.echo.j(&r))).re;
    linear - penalty
}

/// SCA linearization of user `k`'s QoS constraint at the current `W_i`:
/// `(1 + 1/xi)(2 Re(conj(a) h^H w_k) - |a|^2) >= ||W^H h||^2 + d`, with
/// `a = h^H w_{k,i}`.
#[derive(Debug, Clone)]
pub struct QosLinearization {
    pub user: usize,
    pub h: CVector,
    pub alpha: Complex64,
    pub d: f64,
    pub factor: f64,
}

impl QosLinearization {
    fn column(&self, w: &CMatrix) -> usize {
        w.nrows() + self.user
    }

    /// Linearized left-hand side.
    pub fn lhs(&self, w: &CMatrix) -> f64 {
        let hw = self.h.dotc(&w.column(self.column(w)));
        self.factor * (2.0 * (self.alpha.conj() * hw).re - self.alpha.norm_sqr())
    }

    /// Exact concave left-hand side `(1 + 1/xi) |h^H w_k|^2`.
    pub fn exact_lhs(&self, w: &CMatrix) -> f64 {
        self.factor * self.h.dotc(&w.column(self.column(w))).norm_sqr()
    }

    /// `h^H R h + d`.
    pub fn rhs(&self, w: &CMatrix) -> f64 {
        (w.adjoint() * &self.h).norm_squared() + self.d
    }

    pub fn satisfied(&self, w: &CMatrix, rel_tol: f64) -> bool {
        self.lhs(w) >= self.rhs(w) * (1.0 - rel_tol)
    }
}

pub fn qos_linearize(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    k: usize,
) -> Result<QosLinearization> {
    state.check_dims(chan)?;
    if k >= chan.k_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    let h = equivalent_channel(chan, &state.v, k);
    if h.norm() < 1e-12 {
        return Err(Error::DegenerateUser { user: k, reason: "equivalent channel is zero".into() });
    }
    let alpha = h.dotc(&state.w_comm(k));
    if alpha.norm() == 0.0 {
        return Err(Error::DegenerateLinearization { user: k });
    }
    Ok(QosLinearization {
        user: k,
        h,
        alpha,
        d: user_noise(chan, &state.v, &scen.noise(), k),
        factor: 1.0 + 1.0 / scen.xi_lin(),
    })
}

/// Remaining RIS power budget after the noise terms:
/// `P_RIS - 2 sigma^2 Tr(Phi Phi^H) - sigma^2 ||Phi^H A Phi||_F^2`.
pub fn ris_signal_budget(chan: &ChannelSet, v: &CVector, scen: &Scenario) -> f64 {
    if scen.p_ris_w.is_infinite() {
        return f64::INFINITY;
    }
    let sigma2 = scen.noise().ris;
    let phi = crate::matkernel::diag_matrix(v);
    let y = phi.adjoint() * &chan.a * &phi;
    scen.p_ris_w - 2.0 * sigma2 * v.norm_squared() - sigma2 * fro(&y).powi(2)
}

/// Rows `Re/Im (P W)_{ab}` over the block holding `vec(W~)`, `W = scale W~`.
fn product_rows(block: BlockId, p: &CMatrix, cols: usize, scale: f64, weight: f64) -> Vec<AffineExpr> {
    let m = p.ncols();
    let mut rows = Vec::with_capacity(2 * p.nrows() * cols);
    for b in 0..cols {
        for a in 0..p.nrows() {
            let mut g = CVector::zeros(m * cols);
            for c in 0..m {
                g[b * m + c] = p[(a, c)].conj() * (scale * weight);
            }
            rows.push(AffineExpr::inner(block, g.clone()));
            rows.push(AffineExpr::inner_im(block, g));
        }
    }
    rows
}

fn column_coeff(m: usize, cols: usize, col: usize, v: &CVector, factor: Complex64) -> CVector {
    let mut g = CVector::zeros(m * cols);
    for c in 0..m {
        g[col * m + c] = v[c] * factor;
    }
    g
}

/// Solves the convex `W` subproblem: maximize the surrogate subject to the
/// linearized QoS constraints, the BS power budget and the RIS signal
/// power budget. Returns `W_i` unchanged if the solve would not improve the
/// surrogate.
pub fn solve_w_subproblem(
    ctx: &SurrogateContext,
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
) -> Result<CMatrix> {
    state.check_dims(chan)?;
    let m = chan.m_antennas();
    let k_users = chan.k_users();
    let cols = m + k_users;
    let e_budget = ris_signal_budget(chan, &state.v, scen);
    if e_budget <= 0.0 {
        return Err(Error::RisBudget { remaining: e_budget });
    }
    let lins: Vec<QosLinearization> =
        (0..k_users).map(|k| qos_linearize(state, chan, scen, k)).collect::<Result<_>>()?;

    let f_grad = ctx.echo.b.adjoint() * &ctx.j_i_inv * &ctx.x_i; // M x cols
    if ctx.sinr_i <= 0.0 || fro(&f_grad) == 0.0 {
        // Flat surrogate: every feasible W is optimal; keep the current one.
        return Ok(state.w.clone());
    }
    let gamma = ctx.sinr_i;
    let s = scen.p_bs_w.sqrt();

    let mut p = SdpProblem::new();
    let wb = p.add_block(BlockKind::ComplexFree(m * cols));
    let ub = p.add_block(BlockKind::RealFree(1));
    let u = AffineExpr::entry(ub, 0, 1.0);

    // Objective (divided by the current SINR):
    // 2 Re <F, W> - ||L_T^H E W||^2 - Tr(T_i D).
    let mut fvec = CVector::zeros(m * cols);
    for b in 0..cols {
        for c in 0..m {
            fvec[b * m + c] = f_grad[(c, b)] * (2.0 * s / gamma);
        }
    }
    let const_term = trace(&(&ctx.t_i * &ctx.echo.d)).re / gamma;
    p.maximize(AffineExpr::inner(wb, fvec) - u.clone() + AffineExpr::constant(-const_term));
    let lt = psd_sqrt_factor(&ctx.t_i)?;
    let pen = lt.adjoint() * &ctx.echo.e;
    p.add_squared_norm_bound(product_rows(wb, &pen, cols, s, 1.0 / gamma.sqrt()), u);

    // Linearized QoS, normalized by the current interference-plus-noise.
    for lin in &lins {
        let scale_k = 1.0 / lin.rhs(&state.w);
        let coeff = column_coeff(m, cols, m + lin.user, &lin.h, lin.alpha * (2.0 * lin.factor * s * scale_k));
        let t = AffineExpr::inner(wb, coeff)
            .plus_constant(-(lin.factor * lin.alpha.norm_sqr() + lin.d) * scale_k);
        let hrow = CMatrix::from_fn(1, m, |_, c| lin.h[c].conj());
        p.add_squared_norm_bound(product_rows(wb, &hrow, cols, s, scale_k.sqrt()), t);
    }

    // BS power: ||W~|| <= 1.
    let id = CMatrix::identity(m, m);
    p.add_soc(product_rows(wb, &id, cols, 1.0, 1.0), AffineExpr::constant(1.0));

    // RIS signal power: ||F_ris^H W|| <= sqrt(e), F_ris F_ris^H = M^H M.
    if e_budget.is_finite() {
        let phi = state.phi();
        let pag = phi.adjoint() * &chan.a * &phi * &chan.g;
        let pg = &phi * &chan.g;
        let gram = hermitian_part(&(pag.adjoint() * &pag + pg.adjoint() * &pg));
        let f_ris = psd_sqrt_factor(&gram)?;
        let w_ris = 1.0 / e_budget.sqrt();
        p.add_soc(product_rows(wb, &f_ris.adjoint(), cols, s, w_ris), AffineExpr::constant(1.0));
    }

    let sol = conic::solve(&p, &SolverOptions::default())?;
    match sol.status {
        Status::Optimal | Status::NumericalLimit => {}
        Status::Infeasible => {
            return Err(Error::Infeasible("beamforming subproblem (linearized QoS, BS or RIS power)".into()))
        }
        Status::Unbounded => return Err(Error::Solver("beamforming subproblem reported unbounded".into())),
    }
    if sol.status == Status::NumericalLimit
        && sol.primal_residual.max(sol.dual_residual) > 1e-5
    {
        log::debug!("W step stalled: pres {:.2e}, dres {:.2e}", sol.primal_residual, sol.dual_residual);
        return Ok(state.w.clone());
    }
    let w_new = CMatrix::from_column_slice(m, cols, (sol.vector(wb) * cr(s)).as_slice());
    if !candidate_feasible(&w_new, &lins, chan, state, scen, e_budget) {
        return Ok(state.w.clone());
    }
    if surrogate_value(ctx, &w_new) < surrogate_value(ctx, &state.w) {
        return Ok(state.w.clone());
    }
    Ok(w_new)
}

fn candidate_feasible(
    w: &CMatrix,
    lins: &[QosLinearization],
    chan: &ChannelSet,
    state: &BeamformerState,
    scen: &Scenario,
    e_budget: f64,
) -> bool {
    const TOL: f64 = 1e-6;
    if fro(w).powi(2) > scen.p_bs_w * (1.0 + TOL) {
        return false;
    }
    if lins.iter().any(|l| !l.satisfied(w, TOL)) {
        return false;
    }
    if e_budget.is_finite() {
        let candidate = BeamformerState::new(w.clone(), state.v.clone());
        match sigmodel::ris_tx_power(&candidate, chan, scen) {
            Ok(p) if p <= scen.p_ris_w + TOL * scen.p_ris_w => {}
            _ => return false,
        }
    }
    true
}

/// Inner MM loop over `W` with the RIS fixed. Stops after `max_iter`
/// passes or when the relative SINR change drops below `rel_tol`.
/// Returns the final `W` and the number of passes run.
pub fn optimize_w(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    max_iter: usize,
    rel_tol: f64,
) -> Result<(CMatrix, usize)> {
    let mut current = state.clone();
    let mut prev = sigmodel::radar_sinr(&current, chan, scen)?;
    let mut passes = 0;
    for _ in 0..max_iter {
        passes += 1;
        let ctx = build_context(&current, chan, scen)?;
        let w = solve_w_subproblem(&ctx, &current, chan, scen)?;
        let candidate = BeamformerState::new(w, current.v.clone());
        let sinr = sigmodel::radar_sinr(&candidate, chan, scen)?;
        if sinr + 1e-12 * prev.abs() < prev {
            break;
        }
        let change = (sinr - prev).abs() / prev.abs().max(1e-300);
        current = candidate;
        prev = sinr;
        if change < rel_tol {
            break;
        }
    }
    Ok((current.w, passes))
}

/// Real gradient of `f` at `W` with respect to `(Re W, Im W)`, returned as a
/// complex matrix `dRe + i dIm`.
pub fn surrogate_gradient(ctx: &SurrogateContext, w: &CMatrix) -> CMatrix {
    // f = 2 Re<F, W> - Tr(T D) - Tr(E^H T E W W^H); d/dW* gives F - E^H T E W.
    let f = ctx.echo.b.adjoint() * &ctx.j_i_inv * &ctx.x_i;
    let quad = ctx.echo.e.adjoint() * &ctx.t_i * &ctx.echo.e * w;
    (f - quad) * cr(2.0)
}

/// Gradient of the exact radar SINR in the same convention as
/// [`surrogate_gradient`].
pub fn radar_sinr_gradient(ctx: &SurrogateContext, w: &CMatrix) -> CMatrix {
    let quad_target = ctx.echo.b.adjoint() * &ctx.j_i_inv * &ctx.echo.b * w;
    let quad_interf = ctx.echo.e.adjoint() * &ctx.t_i * &ctx.echo.e * w;
    (quad_target - quad_interf) * cr(2.0)
}
