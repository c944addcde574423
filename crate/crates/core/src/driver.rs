//! Alternating optimization over the BS beamformer and the RIS
//! coefficients, with per-iteration tracing and a rough operation count.
//!
//! One run: draw a random `v`, build a feasible `W` from the relaxed
//! feasibility problem, then alternate the MM loop over `W` with the
//! SDR loop over `v` until the outer gain falls below a threshold.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{lin_to_db, ChannelSet, Scenario};
use crate::error::{Error, Result};
use crate::feasinit;
use crate::matkernel::{c, CVector};
use crate::risbf;
use crate::sigmodel::{self, BeamformerState};
use crate::txbf;

/// Iteration limits and stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub t_max: usize,
    pub t1_max: usize,
    pub t2_max: usize,
    /// Outer loop stops once an iteration gains less than this (dB).
    pub min_gain_db: f64,
    /// Relative SINR change that ends an inner loop early.
    pub inner_rel_tol: f64,
    /// Gaussian randomization draws per RIS step.
    pub samples: usize,
    /// Joint power line search after each RIS loop (see [`rebalance`]).
    pub rebalance: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            t_max: 20,
            t1_max: 10,
            t2_max: 10,
            min_gain_db: 0.01,
            inner_rel_tol: 1e-3,
            samples: 100,
            rebalance: true,
        }
    }
}

/// Metrics after one outer iteration (`t = 0` is the initial point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub t: usize,
    pub radar_sinr_linear: f64,
    pub user_sinr_linear: Vec<f64>,
    pub bs_power_w: f64,
    pub ris_power_w: f64,
    pub inner_iters_w: usize,
    pub inner_iters_v: usize,
    pub wall_ms: f64,
}

impl IterRecord {
    pub fn radar_sinr_db(&self) -> f64 {
        lin_to_db(self.radar_sinr_linear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Outer gain fell below `min_gain_db`.
    Converged,
    /// `t_max` outer iterations ran.
    MaxIterations,
}

/// How the starting point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    /// Relaxed feasibility problem at the tightened threshold.
    Tightened,
    /// Relaxed feasibility problem at the nominal threshold.
    Nominal,
    /// Zero-forcing construction with a uniform RIS.
    ZeroForcing,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub state: BeamformerState,
    pub termination: Termination,
    pub init: InitSource,
}

impl RunTrace {
    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    /// Number of outer iterations run (excluding the initial record).
    pub fn outer_iters(&self) -> usize {
        self.records.len() - 1
    }

    pub fn radar_sinr_db(&self) -> Vec<f64> {
        self.records.iter().map(IterRecord::radar_sinr_db).collect()
    }

    /// Writes the per-iteration records as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "t",
            "radar_sinr_db",
            "min_user_sinr_db",
            "bs_power_w",
            "ris_power_w",
            "inner_iters_w",
            "inner_iters_v",
            "wall_ms",
        ])?;
        for r in &self.records {
            let min_user = r.user_sinr_linear.iter().cloned().fold(f64::INFINITY, f64::min);
            wtr.write_record([
                r.t.to_string(),
                r.radar_sinr_db().to_string(),
                lin_to_db(min_user).to_string(),
                r.bs_power_w.to_string(),
                r.ris_power_w.to_string(),
                r.inner_iters_w.to_string(),
                r.inner_iters_v.to_string(),
                r.wall_ms.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn record(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario, t: usize, iw: usize, iv: usize, start: Instant) -> Result<IterRecord> {
    let m = sigmodel::metrics(state, chan, scen)?;
    Ok(IterRecord {
        t,
        radar_sinr_linear: m.radar_sinr,
        user_sinr_linear: m.user_sinr,
        bs_power_w: m.bs_power,
        ris_power_w: m.ris_power,
        inner_iters_w: iw,
        inner_iters_v: iv,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Common element magnitude that keeps the RIS within its power budget
/// for every `W` inside the BS budget: with `|v_n| = m`,
/// `||Phi G W||^2 <= m^2 ||G||_2^2 P_BS` and the noise terms are exact.
pub fn safe_magnitude(chan: &ChannelSet, scen: &Scenario) -> f64 {
    let cap = scen.a_ris_lin().sqrt();
    if scen.p_ris_w.is_infinite() {
        return cap;
    }
    let n = chan.n_ris() as f64;
    let sigma2 = scen.noise().ris;
    let g2 = chan.g.singular_values().max().powi(2);
    // sigma2 ||A||_F^2 x^2 + (||G||^2 P_BS + 2 N sigma2) x = P_RIS, x = m^2.
    let qa = sigma2 * chan.a.norm_squared();
    let qb = g2 * scen.p_bs_w + 2.0 * n * sigma2;
    let x = if qa > 0.0 {
        2.0 * scen.p_ris_w / (qb + (qb * qb + 4.0 * qa * scen.p_ris_w).sqrt())
    } else if qb > 0.0 {
        scen.p_ris_w / qb
    } else {
        f64::INFINITY
    };
    x.sqrt().min(cap)
}

/// Random RIS coefficients with uniform phases and the budget-safe magnitude.
pub fn random_v<R: Rng + ?Sized>(chan: &ChannelSet, scen: &Scenario, rng: &mut R) -> CVector {
    let m = safe_magnitude(chan, scen);
    CVector::from_fn(chan.n_ris(), |_, _| {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        c(m * phase.cos(), m * phase.sin())
    })
}

/// Feasible starting point for `v0`: the tightened relaxed problem, then
/// the nominal one, then the zero-forcing certificate.
pub fn initialize(chan: &ChannelSet, scen: &Scenario, v0: &CVector) -> Result<(BeamformerState, InitSource)> {
    let ris_off = scen.a_ris_lin() == 0.0;
    match feasinit::tightened_init(chan, scen, v0, scen.xi2_db) {
        Ok(res) => {
            let source = if res.fell_back { InitSource::Nominal } else { InitSource::Tightened };
            Ok((res.state(), source))
        }
        Err(Error::Infeasible(reason)) if !ris_off => {
            let report = feasinit::search_lemma2_rho(chan, scen)?;
            if report.feasible() {
                log::info!("relaxed initialization infeasible ({reason}); using the zero-forcing point");
                Ok((BeamformerState::new(report.beamformer(), report.v(chan.n_ris())), InitSource::ZeroForcing))
            } else {
                Err(Error::Infeasible(format!(
                    "{reason}; zero-forcing check also fails (rho {:.3}, rank {}, QoS power {}, rho range {}, RIS power {})",
                    report.rho, report.rank_ok, report.qos_power_ok, report.rho_range_ok, report.ris_power_ok
                )))
            }
        }
        Err(e) => Err(e),
    }
}

/// Inner SDR loop over `v`. Returns the new coefficients and the number
/// of steps attempted.
fn optimize_v_loop<R: Rng + ?Sized>(
    state: &BeamformerState,
    chan: &ChannelSet,
    scen: &Scenario,
    limits: &Limits,
    rng: &mut R,
) -> Result<(CVector, usize)> {
    let mut current = state.clone();
    let mut prev = sigmodel::radar_sinr(&current, chan, scen)?;
    let mut steps = 0;
    for _ in 0..limits.t2_max {
        steps += 1;
        let step = risbf::optimize_v(&current, chan, scen, limits.samples, rng)?;
        if !step.accepted {
            break;
        }
        current.v = step.v;
        let sinr = sigmodel::radar_sinr(&current, chan, scen)?;
        let change = (sinr - prev) / prev.abs().max(1e-300);
        prev = sinr;
        if change < limits.inner_rel_tol {
            break;
        }
    }
    Ok((current.v, steps))
}

/// RIS power split by how it scales under the line search: signal terms
/// of the scaled columns, signal terms of the fixed columns and noise.
struct PowerSplit {
    scaled: [f64; 2],
    fixed: [f64; 2],
    noise: [f64; 2],
}

impl PowerSplit {
    fn new(state: &BeamformerState, cols: &[usize], chan: &ChannelSet, scen: &Scenario) -> Result<Self> {
        let mut ws = state.w.clone();
        let mut wf = state.w.clone();
        for j in 0..state.w.ncols() {
            if cols.contains(&j) {
                wf.column_mut(j).fill(c(0.0, 0.0));
            } else {
                ws.column_mut(j).fill(c(0.0, 0.0));
            }
        }
        let ts = sigmodel::ris_power_terms(&BeamformerState::new(ws, state.v.clone()), chan, scen)?;
        let tf = sigmodel::ris_power_terms(&BeamformerState::new(wf, state.v.clone()), chan, scen)?;
        Ok(Self { scaled: [ts[0], ts[2]], fixed: [tf[0], tf[2]], noise: [ts[1], ts[3]] })
    }

    /// Largest `t` keeping the RIS power of `(s W_scaled, W_fixed, t v)`
    /// within `budget`.
    fn max_scale(&self, s: f64, budget: f64) -> f64 {
        if budget.is_infinite() {
            return f64::INFINITY;
        }
        let s2 = s * s;
        let qa = s2 * self.scaled[0] + self.fixed[0] + self.noise[0];
        let qb = s2 * self.scaled[1] + self.fixed[1] + self.noise[1];
        let b = budget * (1.0 - 1e-9);
        let x = if qa > 0.0 {
            2.0 * b / (qb + (qb * qb + 4.0 * qa * b).sqrt())
        } else if qb > 0.0 {
            b / qb
        } else {
            f64::INFINITY
        };
        x.sqrt()
    }
}

/// Line search along a coupled power direction: scale a set of BS
/// columns by `s` and the RIS by the largest `t(s)` the RIS budget and
/// gain cap allow. Three directions are tried: all columns, radar
/// columns only and user columns only.
///
/// With both budgets active neither block update can trade BS power for
/// RIS gain, although doing so raises the radar SINR whenever
/// self-interference dominates the BS noise. Returns an improved feasible
/// state, if any.
pub fn rebalance(state: &BeamformerState, chan: &ChannelSet, scen: &Scenario) -> Result<Option<BeamformerState>> {
    let vmax = state.v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if vmax == 0.0 {
        return Ok(None);
    }
    let m = chan.m_antennas();
    let all: Vec<usize> = (0..state.w.ncols()).collect();
    let radar: Vec<usize> = (0..m).collect();
    let comm: Vec<usize> = (m..state.w.ncols()).collect();
    let mut best_val = sigmodel::radar_sinr(state, chan, scen)?;
    let mut best_state = None;
    let directions: &[&[usize]] = if chan.k_users() == 0 { &[&all] } else { &[&all, &radar, &comm] };
    for &cols in directions {
        if let Some((val, st)) = line_search(state, cols, vmax, chan, scen)? {
            if val > best_val {
                best_val = val;
                best_state = Some(st);
            }
        }
    }
    Ok(best_state)
}

fn line_search(
    state: &BeamformerState,
    cols: &[usize],
    vmax: f64,
    chan: &ChannelSet,
    scen: &Scenario,
) -> Result<Option<(f64, BeamformerState)>> {
    let scaled2: f64 = cols.iter().map(|&j| state.w.column(j).norm_squared()).sum();
    let fixed2 = state.w.norm_squared() - scaled2;
    if scaled2 == 0.0 || fixed2 >= scen.p_bs_w {
        return Ok(None);
    }
    let split = PowerSplit::new(state, cols, chan, scen)?;
    let t_cap = scen.a_ris_lin().sqrt() / vmax;
    let s_max = ((scen.p_bs_w - fixed2) / scaled2).sqrt() * (1.0 - 1e-12);
    let eval = |ls: f64| -> Result<Option<(f64, BeamformerState)>> {
        let s = ls.exp();
        let t = split.max_scale(s, scen.p_ris_w).min(t_cap);
        if !t.is_finite() {
            return Ok(None);
        }
        let mut w = state.w.clone();
        for &j in cols {
            w.column_mut(j).scale_mut(s);
        }
        let cand = BeamformerState::new(w, &state.v * c(t, 0.0));
        let m = sigmodel::metrics(&cand, chan, scen)?;
        Ok(m.feasible.then_some((m.radar_sinr, cand)))
    };
    const GRID: usize = 25;
    let (lo, hi) = ((s_max * 1e-3).ln(), s_max.ln());
    let grid: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
    let mut best: Option<(usize, f64, BeamformerState)> = None;
    for (i, &ls) in grid.iter().enumerate() {
        if let Some((val, cand)) = eval(ls)? {
            if best.as_ref().is_none_or(|b| val > b.1) {
                best = Some((i, val, cand));
            }
        }
    }
    let Some((i, mut best_val, mut best_state)) = best else { return Ok(None) };
    // Golden-section refinement between the neighbouring grid points.
    let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(GRID - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut probe = |x: f64| -> Result<f64> {
        Ok(match eval(x)? {
            Some((v, st)) => {
                if v > best_val {
                    best_val = v;
                    best_state = st;
                }
                v
            }
            None => f64::NEG_INFINITY,
        })
    };
    for _ in 0..30 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if probe(x1)? >= probe(x2)? {
            b = x2;
        } else {
            a = x1;
        }
    }
    Ok(Some((best_val, best_state)))
}

/// Runs the alternating optimization from a random RIS draw.
pub fn run_algorithm1<R: Rng + ?Sized>(scen: &Scenario, chan: &ChannelSet, rng: &mut R, limits: &Limits) -> Result<RunTrace> {
    scen.validate()?;
    let v0 = random_v(chan, scen, rng);
    run_from(scen, chan, &v0, rng, limits)
}

/// Runs the alternating optimization from a given RIS starting point.
pub fn run_from<R: Rng + ?Sized>(
    scen: &Scenario,
    chan: &ChannelSet,
    v0: &CVector,
    rng: &mut R,
    limits: &Limits,
) -> Result<RunTrace> {
    let start = Instant::now();
    let ris_off = scen.a_ris_lin() == 0.0;
    let v0 = if ris_off { CVector::zeros(chan.n_ris()) } else { v0.clone() };
    let (mut state, init) = initialize(chan, scen, &v0)?;
    let mut records = vec![record(&state, chan, scen, 0, 0, 0, start)?];
    let mut termination = Termination::MaxIterations;
    for t in 1..=limits.t_max {
        let before = records.last().unwrap().radar_sinr_linear;
        let (w, iw) = txbf::optimize_w(&state, chan, scen, limits.t1_max, limits.inner_rel_tol)?;
        state.w = w;
        let iv = if ris_off {
            0
        } else {
            let (v, iv) = optimize_v_loop(&state, chan, scen, limits, rng)?;
            state.v = v;
            iv
        };
        if limits.rebalance && !ris_off {
            if let Some(better) = rebalance(&state, chan, scen)? {
                state = better;
            }
        }
        let rec = record(&state, chan, scen, t, iw, iv, start)?;
        let gain_db = lin_to_db(rec.radar_sinr_linear) - lin_to_db(before);
        log::debug!("outer {t}: radar SINR {:.4} dB (gain {gain_db:.4} dB)", rec.radar_sinr_db());
        records.push(rec);
        if !(gain_db >= limits.min_gain_db) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(RunTrace { records, state, termination, init })
}

/// Interior-point operation counts for the two subproblems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    /// SOC constraints in the beamforming subproblem (`K + 3`).
    pub soc_constraints: usize,
    pub n1: usize,
    pub n2: usize,
    /// Per-solve count for the beamforming subproblem.
    pub o_f: f64,
    /// Per-solve count for the RIS subproblem.
    pub o_e: f64,
    /// `t_max (t1_max o_f + t2_max o_e)`.
    pub total: f64,
}

/// Evaluates the leading-order interior-point counts
/// `o_f = sqrt(2 m1) (n1^2 + n1 K m1^2)` with `n1 = m1 = M (M + K)` and
/// `o_e = sqrt(2 m2) (n2^2 + n2 K m2^2)` with `n2 = m2 = N^2`.
pub fn complexity_estimate(m: usize, n: usize, k: usize, limits: &Limits) -> Complexity {
    let n1 = m * (m + k);
    let n2 = n * n;
    let count = |dim: usize| {
        let d = dim as f64;
        (2.0 * d).sqrt() * (d * d + d * k as f64 * d * d)
    };
    let o_f = count(n1);
    let o_e = count(n2);
    Complexity {
        soc_constraints: k + 3,
        n1,
        n2,
        o_f,
        o_e,
        total: limits.t_max as f64 * (limits.t1_max as f64 * o_f + limits.t2_max as f64 * o_e),
    }
}
