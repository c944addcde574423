//! Experiment configuration, parameter sweeps and result files.
//!
//! A config is a TOML document with a full [`Scenario`], an optional sweep
//! over one parameter, a list of seeds and an operating mode. Each
//! `(sweep value, seed)` point draws its own channels, runs the
//! alternating optimization and yields one CSV row.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_w, lin_to_db, seeded_rng, ChannelSet, Scenario};
use crate::driver::{self, Limits, RunTrace};
use crate::error::{Error, Result};
use crate::sigmodel::{self, BeamformerState};

/// The reference configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// Operating mode of one experiment point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sensing plus every configured user.
    Dfrc,
    /// Sensing only, no QoS constraints.
    SensingOnly,
    /// Sensing plus UE 1 only.
    SensUe1,
    /// Sensing plus UE 2 only.
    SensUe2,
    /// Passive surface: no RIS noise, no RIS power budget, `|v_n| <= 1`.
    Passive,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Dfrc => "dfrc",
            Mode::SensingOnly => "sensing_only",
            Mode::SensUe1 => "sens_ue1",
            Mode::SensUe2 => "sens_ue2",
            Mode::Passive => "passive",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NRis,
    PRisW,
    /// Distance of the RIS from the BS along the BS-target line; UE 2
    /// moves with the RIS.
    RisXM,
    ARisDb,
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Mode(Mode),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Mode(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Fixed total power budget. When set, the BS budget is whatever the
    /// RIS budget and the element circuit power leave over.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_budget_w: Option<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub limits: Limits,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config(DEFAULT_CONFIG).expect("embedded default config is valid")
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

fn field_from_message(msg: &str) -> Option<String> {
    for key in ["missing field `", "unknown field `"] {
        if let Some(i) = msg.find(key) {
            let rest = &msg[i + key.len()..];
            return rest.find('`').map(|j| rest[..j].to_string());
        }
    }
    None
}

impl ExperimentConfig {
    /// Checks value ranges beyond what the schema enforces.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_error("seeds", "must list at least one seed"));
        }
        if self.workers == 0 {
            return Err(config_error("workers", "must be positive"));
        }
        if let Some(q) = self.q_budget_w {
            if !(q > 0.0 && q.is_finite()) {
                return Err(config_error("q_budget_w", "must be positive and finite"));
            }
        }
        let lim = &self.limits;
        if lim.t_max == 0 || lim.t1_max == 0 || lim.t2_max == 0 || lim.samples == 0 {
            return Err(config_error("limits", "iteration counts and samples must be positive"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config_error("sweep.values", "must not be empty"));
            }
            for v in &sweep.values {
                check_sweep_value(sweep.parameter, v)?;
            }
        }
        for p in self.points() {
            self.point_scenario(p.0, p.1)?.0.validate()?;
        }
        Ok(())
    }

    /// The `(sweep value, mode)` pairs of this config in output order.
    pub fn points(&self) -> Vec<(Option<SweepValue>, Mode)> {
        match &self.sweep {
            None => vec![(None, self.mode)],
            Some(s) => s
                .values
                .iter()
                .map(|v| match (s.parameter, v) {
                    (SweepParameter::Mode, SweepValue::Mode(m)) => (Some(*v), *m),
                    _ => (Some(*v), self.mode),
                })
                .collect(),
        }
    }

    /// Scenario for one point and the users kept by its mode. The
    /// returned scenario still lists every configured UE; the mode's user
    /// subset is applied to the drawn channels.
    pub fn point_scenario(&self, value: Option<SweepValue>, mode: Mode) -> Result<(Scenario, Vec<usize>)> {
        let mut scen = self.scenario.clone();
        if let Some(v) = value {
            apply_sweep(&mut scen, self.sweep.as_ref().unwrap().parameter, v)?;
        }
        let all: Vec<usize> = (0..scen.k_users).collect();
        let users = match mode {
            Mode::Dfrc | Mode::Passive => all,
            Mode::SensingOnly => vec![],
            Mode::SensUe1 => vec![0],
            Mode::SensUe2 => vec![1],
        };
        if users.iter().any(|&k| k >= scen.k_users) {
            return Err(config_error("mode", format!("{mode} needs more users than k_users = {}", scen.k_users)));
        }
        if mode == Mode::Passive {
            make_passive(&mut scen);
        }
        if let Some(q) = self.q_budget_w {
            scen.p_bs_w = if mode == Mode::Passive { passive_bs_budget(&scen, q) } else { active_bs_budget(&scen, q) };
            if !(scen.p_bs_w > 0.0) {
                return Err(config_error(
                    "q_budget_w",
                    format!("budget {q} W leaves no BS power ({} W)", scen.p_bs_w),
                ));
            }
        }
        Ok((scen, users))
    }
}

fn check_sweep_value(parameter: SweepParameter, v: &SweepValue) -> Result<()> {
    let field = "sweep.values";
    match (parameter, v) {
        (SweepParameter::Mode, SweepValue::Mode(_)) => Ok(()),
        (SweepParameter::Mode, _) => Err(config_error(field, "mode sweep needs mode names")),
        (_, SweepValue::Mode(_)) => Err(config_error(field, "numeric sweep got a mode name")),
        (SweepParameter::NRis, SweepValue::Number(x)) if *x >= 1.0 && x.fract() == 0.0 && *x <= 1024.0 => Ok(()),
        (SweepParameter::NRis, _) => Err(config_error(field, "n_ris values must be integers in [1, 1024]")),
        (SweepParameter::PRisW, SweepValue::Number(x)) if *x > 0.0 => Ok(()),
        (SweepParameter::PRisW, _) => Err(config_error(field, "p_ris_w values must be positive")),
        (SweepParameter::RisXM, SweepValue::Number(x)) if x.is_finite() && *x > 0.0 => Ok(()),
        (SweepParameter::RisXM, _) => Err(config_error(field, "ris_x_m values must be positive distances")),
        (SweepParameter::ARisDb, SweepValue::Number(x)) if *x >= 0.0 => Ok(()),
        (SweepParameter::ARisDb, _) => Err(config_error(field, "a_ris_db values must be >= 0")),
    }
}

fn apply_sweep(scen: &mut Scenario, parameter: SweepParameter, v: SweepValue) -> Result<()> {
    check_sweep_value(parameter, &v)?;
    let SweepValue::Number(x) = v else { return Ok(()) };
    match parameter {
        SweepParameter::NRis => scen.n_ris = x as usize,
        SweepParameter::PRisW => scen.p_ris_w = x,
        SweepParameter::ARisDb => scen.a_ris_db = x,
        SweepParameter::RisXM => {
            // Move the RIS along the BS-target line; UE 2 keeps its offset.
            let (bs, tg) = (scen.bs_pos_m, scen.target_pos_m);
            let len = ((tg[0] - bs[0]).powi(2) + (tg[1] - bs[1]).powi(2)).sqrt();
            let dir = [(tg[0] - bs[0]) / len, (tg[1] - bs[1]) / len];
            let new = [bs[0] + x * dir[0], bs[1] + x * dir[1]];
            let shift = [new[0] - scen.ris_pos_m[0], new[1] - scen.ris_pos_m[1]];
            scen.ris_pos_m = new;
            if let Some(ue) = scen.ue_pos_m.get_mut(1) {
                ue[0] += shift[0];
                ue[1] += shift[1];
            }
        }
        SweepParameter::Mode => {}
    }
    Ok(())
}

/// Switches a scenario to a passive surface: no amplifier noise, no RIS
/// power budget and unit gain cap.
pub fn make_passive(scen: &mut Scenario) {
    scen.ris_noise = false;
    scen.p_ris_w = f64::INFINITY;
    scen.a_ris_db = 0.0;
}

/// BS budget left by `Q_act = P_BS + P_RIS + N (P_SW + P_DC)`.
pub fn active_bs_budget(scen: &Scenario, q_w: f64) -> f64 {
    q_w - scen.p_ris_w - scen.n_ris as f64 * (dbm_to_w(scen.p_sw_dbm) + dbm_to_w(scen.p_dc_dbm))
}

/// BS budget left by `Q_pas = P_BS + N P_SW`.
pub fn passive_bs_budget(scen: &Scenario, q_w: f64) -> f64 {
    q_w - scen.n_ris as f64 * dbm_to_w(scen.p_sw_dbm)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = field_from_message(&msg).unwrap_or_else(|| "<document>".to_string());
        config_error(&field, e.to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn config_to_string(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| config_error("<document>", e.to_string()))
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config_to_string(cfg)?)?;
    Ok(())
}

/// One CSV row. Column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: String,
    pub seed: u64,
    pub mode: Mode,
    pub radar_sinr_db: f64,
    pub min_user_sinr_db: f64,
    pub bs_power_w: f64,
    pub ris_power_w: f64,
    pub outer_iters: usize,
    pub wall_ms: f64,
    /// `ok`, `infeasible: ...` or `failed: ...`.
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Result of one point, with the inputs that produced it.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub row: ResultRow,
    pub scenario: Scenario,
    pub trace: Option<RunTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sweep_value: String,
    pub mode: Mode,
    pub succeeded: usize,
    pub failed: usize,
    /// Mean of the per-seed radar SINR in dB.
    pub mean_db: f64,
    pub p10_db: f64,
    pub p50_db: f64,
    pub p90_db: f64,
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub points: Vec<PointResult>,
}

impl ResultTable {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.points.iter().map(|p| p.row.clone()).collect()
    }

    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.row.ok())
    }

    /// Per `(sweep value, mode)` statistics over the successful seeds, in
    /// first-appearance order.
    pub fn summarize(&self) -> Vec<Summary> {
        let mut keys: Vec<(String, Mode)> = Vec::new();
        for p in &self.points {
            let key = (p.row.sweep_value.clone(), p.row.mode);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(value, mode)| {
                let group: Vec<&ResultRow> =
                    self.points.iter().map(|p| &p.row).filter(|r| r.sweep_value == value && r.mode == mode).collect();
                let mut db: Vec<f64> = group.iter().filter(|r| r.ok()).map(|r| r.radar_sinr_db).collect();
                db.sort_by(|a, b| a.total_cmp(b));
                let mean = if db.is_empty() { f64::NAN } else { db.iter().sum::<f64>() / db.len() as f64 };
                Summary {
                    sweep_value: value,
                    mode,
                    succeeded: db.len(),
                    failed: group.len() - db.len(),
                    mean_db: mean,
                    p10_db: percentile(&db, 0.1),
                    p50_db: percentile(&db, 0.5),
                    p90_db: percentile(&db, 0.9),
                }
            })
            .collect()
    }
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Seed of the driver's randomization stream, kept apart from the
/// channel stream so modes sharing a seed see the same channels.
pub fn driver_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Runs one point. Failures become rows with a status message.
pub fn run_point(cfg: &ExperimentConfig, value: Option<SweepValue>, mode: Mode, seed: u64) -> PointResult {
    let label = value.map(|v| v.to_string()).unwrap_or_default();
    let failed = |scenario: Scenario, status: String| PointResult {
        row: ResultRow {
            sweep_value: label.clone(),
            seed,
            mode,
            radar_sinr_db: f64::NAN,
            min_user_sinr_db: f64::NAN,
            bs_power_w: f64::NAN,
            ris_power_w: f64::NAN,
            outer_iters: 0,
            wall_ms: 0.0,
            status,
        },
        scenario,
        trace: None,
    };
    let (scen, users) = match cfg.point_scenario(value, mode) {
        Ok(x) => x,
        Err(e) => return failed(cfg.scenario.clone(), format!("failed: {e}")),
    };
    let outcome = ChannelSet::from_seed(&scen, seed).and_then(|full| {
        let chan = full.with_users(&users);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(driver_seed(seed));
        driver::run_algorithm1(&scen, &chan, &mut rng, &cfg.limits).map(|t| (t, chan))
    });
    match outcome {
        Ok((trace, chan)) => {
            let rec = trace.final_record();
            let min_user = rec.user_sinr_linear.iter().cloned().fold(f64::INFINITY, f64::min);
            let feasible = sigmodel::metrics(&trace.state, &chan, &scen).map(|m| m.feasible).unwrap_or(false);
            PointResult {
                row: ResultRow {
                    sweep_value: label.clone(),
                    seed,
                    mode,
                    radar_sinr_db: lin_to_db(rec.radar_sinr_linear),
                    min_user_sinr_db: lin_to_db(min_user),
                    bs_power_w: rec.bs_power_w,
                    ris_power_w: rec.ris_power_w,
                    outer_iters: trace.outer_iters(),
                    wall_ms: rec.wall_ms,
                    status: if feasible { "ok".into() } else { "failed: final state violates a constraint".into() },
                },
                scenario: scen,
                trace: Some(trace),
            }
        }
        Err(Error::Infeasible(reason)) => failed(scen, format!("infeasible: {reason}")),
        Err(e) => failed(scen, format!("failed: {e}")),
    }
}

/// Runs every `(sweep value, seed)` point. Points run on `cfg.workers`
/// threads; results come back in `(sweep value, seed)` order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let jobs: Vec<(Option<SweepValue>, Mode, u64)> =
        cfg.points().into_iter().flat_map(|(v, m)| cfg.seeds.iter().map(move |&s| (v, m, s))).collect();
    let run = || jobs.par_iter().map(|&(v, m, s)| run_point(cfg, v, m, s)).collect::<Vec<_>>();
    let points = if cfg.workers == 1 {
        jobs.iter().map(|&(v, m, s)| run_point(cfg, v, m, s)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| config_error("workers", e.to_string()))?
            .install(run)
    };
    Ok(ResultTable { points })
}

/// Runs the passive-surface baseline for a `mode = "passive"` config.
pub fn passive_baseline(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.mode != Mode::Passive {
        return Err(config_error("mode", "passive baseline requires mode = \"passive\""));
    }
    run_experiment(cfg)
}

pub fn persist_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Result of the simplified sensing-only problem.
#[derive(Debug, Clone)]
pub struct SensingSolution {
    pub state: BeamformerState,
    /// `||G^H Phi^H A Phi G W||_F^2`.
    pub objective: f64,
    /// `(P_RIS - P(W, v)) / P_RIS` for the RIS budget without noise terms.
    pub ris_slack_rel: f64,
    pub trace: RunTrace,
}

impl SensingSolution {
    pub fn ris_budget_tight(&self, rel_tol: f64) -> bool {
        self.ris_slack_rel.abs() <= rel_tol
    }
}

/// Sensing-only problem without RIS noise and without self-interference:
/// maximize the echo power `||G^H Phi^H A Phi G W||^2` under the RIS and
/// BS budgets (and the gain cap, if finite). With those terms removed the
/// radar SINR is the echo power over the BS noise, so the regular
/// alternating optimization solves it.
pub fn simplified_sensing_solve(
    scen: &Scenario,
    chan: &ChannelSet,
    seed: u64,
    limits: &Limits,
) -> Result<SensingSolution> {
    let scen = Scenario { ris_noise: false, eta: 0.0, k_users: 0, ..scen.clone() };
    let chan = chan.with_users(&[]);
    let trace = driver::run_algorithm1(&scen, &chan, &mut seeded_rng(driver_seed(seed)), limits)?;
    let state = trace.state.clone();
    let b = sigmodel::echo_matrices(&chan, &state.v, &scen.noise(), 0.0).b;
    let objective = (&b * &state.w).norm_squared();
    let power = sigmodel::ris_tx_power(&state, &chan, &scen)?;
    let ris_slack_rel = if scen.p_ris_w.is_finite() { (scen.p_ris_w - power) / scen.p_ris_w } else { f64::INFINITY };
    Ok(SensingSolution { state, objective, ris_slack_rel, trace })
}

/// Beampattern samples on a uniform grid over `[-90, 90]` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamRow {
    pub theta_deg: f64,
    pub power: f64,
    pub normalized_db: f64,
}

pub fn beampattern_rows(state: &BeamformerState, chan: &ChannelSet, grid_deg: f64) -> Result<Vec<BeamRow>> {
    if !(grid_deg > 0.0 && grid_deg <= 180.0) {
        return Err(Error::Domain(format!("grid resolution must lie in (0, 180] degrees, got {grid_deg}")));
    }
    let steps = (180.0 / grid_deg).round() as usize;
    let theta_deg: Vec<f64> = (0..=steps).map(|i| -90.0 + i as f64 * 180.0 / steps as f64).collect();
    let grid: Vec<f64> = theta_deg.iter().map(|t| t.to_radians()).collect();
    let power = sigmodel::beampattern(state, chan, &grid)?;
    let peak = power.iter().cloned().fold(0.0, f64::max);
    Ok(theta_deg
        .into_iter()
        .zip(power)
        .map(|(theta_deg, power)| BeamRow {
            theta_deg,
            power,
            normalized_db: if peak > 0.0 { lin_to_db(power / peak) } else { f64::NAN },
        })
        .collect())
}

/// Writes the beampattern `(theta_deg, power, normalized_db)` as CSV.
pub fn export_beampattern(state: &BeamformerState, chan: &ChannelSet, grid_deg: f64, path: &Path) -> Result<Vec<BeamRow>> {
    let rows = beampattern_rows(state, chan, grid_deg)?;
    let mut wtr = csv::Writer::from_path(path)?;
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(rows)
}

/// Peak-to-highest-sidelobe ratio in dB: the strongest local maximum
/// outside the main lobe, relative to the peak (0 dB if there is none).
pub fn sidelobe_level_db(rows: &[BeamRow]) -> f64 {
    let p: Vec<f64> = rows.iter().map(|r| r.power).collect();
    let Some(peak) = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])) else { return f64::NEG_INFINITY };
    // Walk down both flanks of the main lobe to its nulls.
    let mut lo = peak;
    while lo > 0 && p[lo - 1] <= p[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < p.len() && p[hi + 1] <= p[hi] {
        hi += 1;
    }
    let side = p[..lo].iter().chain(&p[hi + 1..]).cloned().fold(0.0, f64::max);
    if side > 0.0 {
        lin_to_db(side / p[peak])
    } else {
        f64::NEG_INFINITY
    }
}
