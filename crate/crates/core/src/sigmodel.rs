//! Performance metrics of a beamforming state: radar SINR of the four-hop
//! echo, per-user SINR, active-RIS transmit power and the transmit
//! beampattern, plus Monte-Carlo simulators of the underlying signal model
//! used as independent oracles.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{crandn, steering, ChannelSet, NoiseLevels, Scenario};
use crate::error::{Error, Result};
use crate::matkernel::{cr, diag_matrix, fro, hermitian_solve, trace, CMatrix, CVector};

/// BS beamformer `W = [W_r W_c]` (`M x (M+K)`) and RIS coefficients.
///
/// `v` holds the diagonal of the reflection matrix as applied on the
/// forward pass, `Phi = Diag(v)`. The RIS subproblem works with the
/// conjugated collection; see [`to_lifted`] / [`from_lifted`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerState {
    pub w: CMatrix,
    pub v: CVector,
}

impl BeamformerState {
    pub fn new(w: CMatrix, v: CVector) -> Self {
        Self { w, v }
    }

    pub fn phi(&self) -> CMatrix {
        diag_matrix(&self.v)
    }

    pub fn covariance(&self) -> CMatrix {
        covariance(&self.w)
    }

    /// Communication column of user `k`.
    pub fn w_comm(&self, k: usize) -> CVector {
        let m = self.w.nrows();
        self.w.column(m + k).into_owned()
    }

    pub fn check_dims(&self, chan: &ChannelSet) -> Result<()> {
        let (m, n, k) = (chan.m_antennas(), chan.n_ris(), chan.k_users());
        if self.w.nrows() != m || self.w.ncols() != m + k || self.v.len() != n {
            return Err(Error::Dimension(format!(
                "state W {:?}, v {} does not match M={m}, N={n}, K={k}",
                self.w.shape(),
                self.v.len()
            )));
        }
        Ok(())
    }
}

/// Maps `diag(Phi)` to the conjugated collection used by the lifted RIS
/// subproblem.
pub fn to_lifted(v_diag: &CVector) -> CVector {
    v_diag.conjugate()
}

/// Inverse of [`to_lifted`].
pub fn from_lifted(v_lifted: &CVector) -> CVector {
    v_lifted.conjugate()
}

/// Transmit covariance `R = W W^H`.
pub fn covariance(w: &CMatrix) -> CMatrix {
    w * w.adjoint()
}

/// Matrices of the echo model for a fixed RIS configuration.
#[derive(Debug, Clone)]
pub struct EchoMatrices {
    /// `G^H Phi^H A Phi G`.
    pub b: CMatrix,
    /// `G^H Phi^H A Phi`.
    pub c: CMatrix,
    /// `sigma^2 C C^H + sigma^2 G^H Phi^H Phi G + sigma_r^2 I`.
    pub d: CMatrix,
    /// `eta G^H Phi G`.
    pub e: CMatrix,
}

impl EchoMatrices {
    /// Interference-plus-noise covariance `J(R) = D + E R E^H`.
    pub fn j(&self, r: &CMatrix) -> CMatrix {
        &self.d + &self.e * r * self.e.adjoint()
    }
}

pub fn echo_matrices(chan: &ChannelSet, v: &CVector, noise: &NoiseLevels, eta: f64) -> EchoMatrices {
    let m = chan.m_antennas();
    let phi = diag_matrix(v);
    let gh = chan.g.adjoint();
    let c = &gh * phi.adjoint() * &chan.a * &phi;
    let b = &c * &chan.g;
    let pg = &phi * &chan.g;
    let d = &c * c.adjoint() * cr(noise.ris)
        + pg.adjoint() * &pg * cr(noise.ris)
        + CMatrix::identity(m, m) * cr(noise.bs);
    let e = &gh * &pg * cr(eta);
    EchoMatrices { b, c, d, e }
}

/// Radar SINR `Tr(B R B^H J^-1)`.
pub fn radar_sinr(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<f64> {
    state.check_dims(chan)?;
    let echo = echo_matrices(chan, &state.v, &scen.noise(), scen.eta);
    let r = state.covariance();
    let j = echo.j(&r);
    let signal = &echo.b * &r * echo.b.adjoint();
    let sol = hermitian_solve(&j, &signal)?;
    Ok(trace(&sol).re.max(0.0))
}

/// Equivalent channel `h_k` with `h_k^H = h1_k^H Phi G + h2_k^H`.
pub fn equivalent_channel(chan: &ChannelSet, v: &CVector, k: usize) -> CVector {
    let phi = diag_matrix(v);
    (&chan.g.adjoint() * phi.adjoint() * &chan.h1[k]) + &chan.h2[k]
}

/// Noise term `d_k = sigma^2 h1_k^H Phi Phi^H h1_k + sigma_z^2`.
pub fn user_noise(chan: &ChannelSet, v: &CVector, noise: &NoiseLevels, k: usize) -> f64 {
    let amplified: f64 = chan.h1[k]
        .iter()
        .zip(v.iter())
        .map(|(h, vn)| h.norm_sqr() * vn.norm_sqr())
        .sum();
    noise.ris * amplified + noise.ue
}

/// SINR of user `k`.
pub fn user_sinr(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario, k: usize) -> Result<f64> {
    state.check_dims(chan)?;
    if k >= chan.k_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    let h = equivalent_channel(chan, &state.v, k);
    let gains: Vec<f64> = state.w.column_iter().map(|col| h.dotc(&col).norm_sqr()).collect();
    let m = chan.m_antennas();
    let desired = gains[m + k];
    let interference: f64 = gains.iter().sum::<f64>() - desired;
    Ok(desired / (interference + user_noise(chan, &state.v, &scen.noise(), k)))
}

/// Active-RIS transmit power (expected power of both reflections).
pub fn ris_tx_power(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<f64> {
    Ok(ris_power_terms(state, chan, scen)?.iter().sum())
}

/// The four terms of the RIS transmit power: amplified echo of the BS
/// signal, amplified echo of the RIS noise, amplified BS signal and
/// amplified noise. Under `W -> s W`, `v -> t v` they scale as
/// `s^2 t^4`, `t^4`, `s^2 t^2` and `t^2`.
pub fn ris_power_terms(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<[f64; 4]> {
    state.check_dims(chan)?;
    let sigma2 = scen.noise().ris;
    let phi = state.phi();
    let r = state.covariance();
    let y = phi.adjoint() * &chan.a * &phi;
    let grg = &chan.g * &r * chan.g.adjoint();
    let t1 = trace(&(&y * &grg * y.adjoint())).re;
    let t2 = sigma2 * fro(&y).powi(2);
    let t3 = trace(&(&phi * &grg * phi.adjoint())).re;
    let t4 = 2.0 * sigma2 * state.v.norm_squared();
    Ok([t1, t2, t3, t4])
}

/// Transmit beampattern from the RIS, `a3(theta)^H Phi G R G^H Phi^H a3(theta)`.
pub fn beampattern(
    state: &BeamformerState,
    chan: &ChannelSet,
    theta_grid: &[f64],
) -> Result<Vec<f64>> {
    if theta_grid.is_empty() {
        return Err(Error::Domain("empty beampattern grid".into()));
    }
    let n = chan.n_ris();
    let pgw = state.phi() * &chan.g * &state.w;
    Ok(theta_grid
        .iter()
        .map(|&theta| {
            let a = steering(n, 0.5, theta);
            let row = a.adjoint() * &pgw;
            row.iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .collect())
}

/// Constraint slacks of one state, relative to each budget. Nonnegative
/// means satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct Slacks {
    pub bs_power: f64,
    pub ris_power: f64,
    pub qos: Vec<f64>,
    pub amplification: f64,
}

impl Slacks {
    pub fn min(&self) -> f64 {
        self.qos
            .iter()
            .copied()
            .chain([self.bs_power, self.ris_power, self.amplification])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub radar_sinr: f64,
    pub user_sinr: Vec<f64>,
    pub ris_power: f64,
    pub bs_power: f64,
    pub slacks: Slacks,
    pub feasible: bool,
}

/// Relative slack tolerance for feasibility verdicts.
pub const FEAS_TOL: f64 = 1e-6;

fn rel_slack(budget: f64, used: f64) -> f64 {
    if budget.is_infinite() {
        f64::INFINITY
    } else {
        (budget - used) / budget.abs().max(1e-300)
    }
}

/// Evaluates every metric and constraint of `state`.
pub fn metrics(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<MetricReport> {
    let radar = radar_sinr(state, chan, scen)?;
    let xi = scen.xi_lin();
    let user: Vec<f64> = (0..chan.k_users())
        .map(|k| user_sinr(state, chan, scen, k))
        .collect::<Result<_>>()?;
    let ris = ris_tx_power(state, chan, scen)?;
    let bs = fro(&state.w).powi(2);
    let max_gain = state.v.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let slacks = Slacks {
        bs_power: rel_slack(scen.p_bs_w, bs),
        ris_power: rel_slack(scen.p_ris_w, ris),
        qos: user.iter().map(|&s| (s - xi) / xi).collect(),
        amplification: rel_slack(scen.a_ris_lin(), max_gain),
    };
    let feasible = slacks.min() >= -FEAS_TOL;
    Ok(MetricReport {
        radar_sinr: radar,
        user_sinr: user,
        ris_power: ris,
        bs_power: bs,
        slacks,
        feasible,
    })
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| crandn(rng) * std)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 10_000 {
        return Err(Error::Domain(format!("{samples} Monte-Carlo samples; need >= 10^4")));
    }
    Ok(())
}

/// Monte-Carlo estimate of the radar SINR from simulated echoes.
///
/// Draws the transmit symbols and every noise source, splits each echo into
/// the target component and everything else, and returns the trace of the
/// target sample covariance whitened by the sample interference-plus-noise
/// covariance.
pub fn mc_radar_sinr_oracle<R: Rng + ?Sized>(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_samples(samples)?;
    state.check_dims(chan)?;
    let noise = scen.noise();
    let (m, n) = (chan.m_antennas(), chan.n_ris());
    let cols = state.w.ncols();
    let phi = state.phi();
    let gh = chan.g.adjoint();
    // Per-hop operators of the received echo.
    let target_path = &gh * phi.adjoint() * &chan.a * &phi; // acts on RIS-side signals
    let direct_echo = &gh * &phi * &chan.g * cr(scen.eta);
    let second_hop = &gh * phi.adjoint();
    let (s_ris, s_bs) = (noise.ris.sqrt(), noise.bs.sqrt());

    let mut sig_cov = CMatrix::zeros(m, m);
    let mut int_cov = CMatrix::zeros(m, m);
    for _ in 0..samples {
        let sym = gaussian_vector(cols, 1.0, rng);
        let x = &state.w * sym;
        let v1 = gaussian_vector(n, s_ris, rng);
        let v2 = gaussian_vector(n, s_ris, rng);
        let zr = gaussian_vector(m, s_bs, rng);
        let target = &target_path * (&chan.g * &x);
        let rest = &target_path * v1 + &second_hop * v2 + &direct_echo * &x + zr;
        sig_cov.gerc(cr(1.0), &target, &target, cr(1.0));
        int_cov.gerc(cr(1.0), &rest, &rest, cr(1.0));
    }
    let scale = cr(1.0 / samples as f64);
    let sig_cov = sig_cov * scale;
    let int_cov = crate::matkernel::hermitian_part(&(int_cov * scale));
    let whitened = hermitian_solve(&int_cov, &sig_cov)?;
    Ok(trace(&whitened).re)
}

/// Monte-Carlo estimate of user `k`'s SINR from simulated received samples.
pub fn mc_user_sinr_oracle<R: Rng + ?Sized>(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_samples(samples)?;
    state.check_dims(chan)?;
    let noise = scen.noise();
    let (m, n) = (chan.m_antennas(), chan.n_ris());
    let phi = state.phi();
    let ris_row = chan.h1[k].adjoint() * &phi; // 1 x N
    let via_ris = &ris_row * &chan.g; // 1 x M
    let direct = chan.h2[k].adjoint();
    let wk = state.w.column(m + k).into_owned();
    let (s_ris, s_ue) = (noise.ris.sqrt(), noise.ue.sqrt());
    let mut p_desired = 0.0;
    let mut p_rest = 0.0;
    for _ in 0..samples {
        let sym = gaussian_vector(state.w.ncols(), 1.0, rng);
        let x = &state.w * &sym;
        let v1 = gaussian_vector(n, s_ris, rng);
        let z = crandn(rng) * s_ue;
        let y = (&via_ris * &x)[0] + (&ris_row * v1)[0] + (&direct * &x)[0] + z;
        let desired = ((&via_ris + &direct) * &wk)[0] * sym[m + k];
        p_desired += desired.norm_sqr();
        p_rest += (y - desired).norm_sqr();
    }
    Ok(p_desired / p_rest)
}

/// Monte-Carlo estimate of the RIS transmit power `E ||y1||^2 + ||y2||^2`.
pub fn mc_ris_power_oracle<R: Rng + ?Sized>(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_samples(samples)?;
    state.check_dims(chan)?;
    let s_ris = scen.noise().ris.sqrt();
    let n = chan.n_ris();
    let phi = state.phi();
    let pg = &phi * &chan.g;
    let back = phi.adjoint() * &chan.a;
    let mut acc = 0.0;
    for _ in 0..samples {
        let sym = gaussian_vector(state.w.ncols(), 1.0, rng);
        let x = &state.w * sym;
        let v1 = gaussian_vector(n, s_ris, rng);
        let v2 = gaussian_vector(n, s_ris, rng);
        let y1 = &pg * &x + &phi * &v1;
        let y2 = &back * &y1 + phi.adjoint() * v2;
        acc += y1.norm_squared() + y2.norm_squared();
    }
    Ok(acc / samples as f64)
}

/// Elementwise squared magnitudes of `v`.
pub fn gains(v: &CVector) -> DVector<f64> {
    v.map(|z: Complex64| z.norm_sqr())
}
