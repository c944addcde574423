//! Scenario geometry, path-loss models and random channel draws.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{c, cr, outer, psd_sqrt_factor, CMatrix, CVector};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// System geometry and every physical constant of one simulated deployment.
///
/// Units are part of the field names. `p_ris_w` and `a_ris_db` may be
/// `inf` (no RIS power constraint / no amplification-gain cap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub m_antennas: usize,
    pub n_ris: usize,
    pub k_users: usize,
    pub bs_pos_m: [f64; 2],
    pub ris_pos_m: [f64; 2],
    pub target_pos_m: [f64; 2],
    pub ue_pos_m: Vec<[f64; 2]>,
    pub p_bs_w: f64,
    pub p_ris_w: f64,
    pub a_ris_db: f64,
    pub xi_db: f64,
    pub xi2_db: f64,
    pub eta: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub pl0_db: f64,
    pub alpha: f64,
    pub rician_k: f64,
    pub rcs_m2: f64,
    pub p_sw_dbm: f64,
    pub p_dc_dbm: f64,
    /// Thermal noise at the RIS amplifiers. Disabled for a passive surface.
    #[serde(default = "default_true")]
    pub ris_noise: bool,
    /// Optional real spatial correlation at the BS (M x M, unit diagonal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_bs: Option<Vec<Vec<f64>>>,
    /// Optional real spatial correlation at the RIS (N x N, unit diagonal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_ris: Option<Vec<Vec<f64>>>,
}

fn default_true() -> bool {
    true
}

impl Default for Scenario {
    /// The reference deployment: BS at the origin, RIS 50 m away, target
    /// at 95 m, one UE near the BS and one near the RIS.
    fn default() -> Self {
        Self {
            m_antennas: 4,
            n_ris: 12,
            k_users: 2,
            bs_pos_m: [0.0, 0.0],
            ris_pos_m: [0.0, 50.0],
            target_pos_m: [0.0, 95.0],
            ue_pos_m: vec![[10.0, 0.0], [10.0, 50.0]],
            p_bs_w: 1.0,
            p_ris_w: 0.01,
            a_ris_db: 40.0,
            xi_db: 10.0,
            xi2_db: 30.0,
            eta: 0.1,
            carrier_hz: 2.7e9,
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -174.0,
            pl0_db: 30.0,
            alpha: 2.2,
            rician_k: 10.0,
            rcs_m2: 100.0,
            p_sw_dbm: -5.0,
            p_dc_dbm: -10.0,
            ris_noise: true,
            corr_bs: None,
            corr_ris: None,
        }
    }
}

/// Noise powers in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    /// RIS thermal noise per element.
    pub ris: f64,
    /// BS receiver noise.
    pub bs: f64,
    /// UE receiver noise.
    pub ue: f64,
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Direction from `from` to `to`, measured from array broadside (the +y
/// axis, arrays lie along x), in `[-pi/2, pi/2]`.
pub fn broadside_angle(from: [f64; 2], to: [f64; 2]) -> f64 {
    let d = dist(from, to);
    if d == 0.0 {
        return 0.0;
    }
    ((to[0] - from[0]) / d).clamp(-1.0, 1.0).asin()
}

impl Scenario {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Maximum amplification gain in linear scale (`inf` when uncapped).
    pub fn a_ris_lin(&self) -> f64 {
        db_to_lin(self.a_ris_db)
    }

    pub fn xi_lin(&self) -> f64 {
        db_to_lin(self.xi_db)
    }

    pub fn xi2_lin(&self) -> f64 {
        db_to_lin(self.xi2_db)
    }

    pub fn noise(&self) -> NoiseLevels {
        let p = noise_power(self.noise_density_dbm_hz, self.bandwidth_hz);
        NoiseLevels {
            ris: if self.ris_noise { p } else { 0.0 },
            bs: p,
            ue: p,
        }
    }

    pub fn bs_ris_distance(&self) -> f64 {
        dist(self.bs_pos_m, self.ris_pos_m)
    }

    pub fn ris_target_distance(&self) -> f64 {
        dist(self.ris_pos_m, self.target_pos_m)
    }

    /// AoD at the BS, AoA at the RIS, DoA of the target at the RIS.
    pub fn angles(&self) -> (f64, f64, f64) {
        (
            broadside_angle(self.bs_pos_m, self.ris_pos_m),
            broadside_angle(self.ris_pos_m, self.bs_pos_m),
            broadside_angle(self.ris_pos_m, self.target_pos_m),
        )
    }

    /// Active-RIS total power budget `P_BS + P_RIS + N (P_SW + P_DC)`.
    pub fn q_active_w(&self) -> f64 {
        self.p_bs_w
            + self.p_ris_w
            + self.n_ris as f64 * (dbm_to_w(self.p_sw_dbm) + dbm_to_w(self.p_dc_dbm))
    }

    /// Checks the physical-range invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: field.to_string(),
                message: message.to_string(),
            })
        };
        if self.m_antennas == 0 {
            return bad("m_antennas", "must be positive");
        }
        if self.n_ris == 0 {
            return bad("n_ris", "must be positive");
        }
        if self.ue_pos_m.len() < self.k_users {
            return bad("ue_pos_m", "fewer positions than k_users");
        }
        for (name, v) in [
            ("p_bs_w", self.p_bs_w),
            ("p_ris_w", self.p_ris_w),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0) {
                return bad(name, "must be strictly positive");
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta", "must lie in [0, 1]");
        }
        // -inf dB switches the surface off entirely.
        if !(self.a_ris_db >= 0.0 || self.a_ris_db == f64::NEG_INFINITY) {
            return bad("a_ris_db", "must be >= 0 dB or -inf");
        }
        if !(self.rician_k >= 0.0) {
            return bad("rician_k", "must be >= 0");
        }
        if !(self.rcs_m2 >= 0.0) {
            return bad("rcs_m2", "must be >= 0");
        }
        for (name, a, b) in [
            ("ris_pos_m", self.bs_pos_m, self.ris_pos_m),
            ("target_pos_m", self.ris_pos_m, self.target_pos_m),
        ] {
            if dist(a, b) < 1.0 {
                return bad(name, "nodes must be at least 1 m apart");
            }
        }
        for (k, &ue) in self.ue_pos_m.iter().take(self.k_users).enumerate() {
            if dist(ue, self.bs_pos_m) < 1.0 || dist(ue, self.ris_pos_m) < 1.0 {
                return bad("ue_pos_m", &format!("UE {k} closer than 1 m to BS or RIS"));
            }
        }
        for (name, corr, n) in [
            ("corr_bs", &self.corr_bs, self.m_antennas),
            ("corr_ris", &self.corr_ris, self.n_ris),
        ] {
            if let Some(rows) = corr {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return bad(name, &format!("must be {n}x{n}"));
                }
            }
        }
        Ok(())
    }
}

/// Realized channels for one draw.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// BS to RIS, `N x M`.
    pub g: CMatrix,
    /// RIS to UE k, length N each.
    pub h1: Vec<CVector>,
    /// BS to UE k, length M each.
    pub h2: Vec<CVector>,
    /// RIS-target-RIS response, `N x N` Hermitian rank one.
    pub a: CMatrix,
    pub beta_r: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl ChannelSet {
    /// Draws every random channel of `scen` from `rng` (G first, then the
    /// users in order).
    pub fn draw<R: Rng + ?Sized>(scen: &Scenario, rng: &mut R) -> Result<Self> {
        let (theta1, theta2, theta3) = scen.angles();
        let g = gen_bs_ris(scen, rng)?;
        let (h1, h2) = gen_user_channels(scen, rng)?;
        let beta_r = radar_pathloss(scen.wavelength_m(), scen.rcs_m2, scen.ris_target_distance())?;
        let a = target_response(scen, beta_r, theta3);
        Ok(Self {
            g,
            h1,
            h2,
            a,
            beta_r,
            theta1,
            theta2,
            theta3,
        })
    }

    /// Seeded convenience wrapper around [`ChannelSet::draw`].
    pub fn from_seed(scen: &Scenario, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        Self::draw(scen, &mut rng)
    }

    pub fn k_users(&self) -> usize {
        self.h1.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_ris(&self) -> usize {
        self.g.nrows()
    }

    /// Keeps only the listed users, in the given order.
    pub fn with_users(&self, users: &[usize]) -> Self {
        let mut out = self.clone();
        out.h1 = users.iter().map(|&k| self.h1[k].clone()).collect();
        out.h2 = users.iter().map(|&k| self.h2[k].clone()).collect();
        out
    }
}

pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Large-scale path-loss amplitude `10^(beta_c / 20)` with
/// `beta_c = -PL0 - 10 alpha log10(d)` dB.
pub fn pathloss_amp(d: f64, alpha: f64, pl0_db: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::Domain(format!("path-loss distance {d} m is below 1 m")));
    }
    Ok(10f64.powf(pathloss_db(d, alpha, pl0_db) / 20.0))
}

pub fn pathloss_db(d: f64, alpha: f64, pl0_db: f64) -> f64 {
    -pl0_db - 10.0 * alpha * d.log10()
}

/// Uniform linear array response with element spacing given in wavelengths.
pub fn steering(n: usize, spacing_over_lambda: f64, theta: f64) -> CVector {
    let phase = -2.0 * PI * spacing_over_lambda * theta.sin();
    CVector::from_fn(n, |m, _| {
        let p = phase * m as f64;
        c(p.cos(), p.sin())
    })
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    c(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rayleigh vector `amp * CN(0, I_n)`.
pub fn rayleigh_vector<R: Rng + ?Sized>(n: usize, amp: f64, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| crandn(rng) * amp)
}

fn correlation_root(corr: &Option<Vec<Vec<f64>>>, n: usize) -> Result<Option<CMatrix>> {
    match corr {
        None => Ok(None),
        Some(rows) => {
            let m = DMatrix::from_fn(n, n, |i, j| cr(rows[i][j]));
            Ok(Some(psd_sqrt_factor(&m)?))
        }
    }
}

/// Rician BS-RIS channel scaled by the BS-RIS path loss.
pub fn gen_bs_ris<R: Rng + ?Sized>(scen: &Scenario, rng: &mut R) -> Result<CMatrix> {
    let (m, n) = (scen.m_antennas, scen.n_ris);
    let (theta1, theta2, _) = scen.angles();
    let amp = pathloss_amp(scen.bs_ris_distance(), scen.alpha, scen.pl0_db)?;
    let los = steering(n, 0.5, theta2) * steering(m, 0.5, theta1).adjoint();
    let mut nlos = CMatrix::from_fn(n, m, |_, _| crandn(rng));
    if let Some(root) = correlation_root(&scen.corr_ris, n)? {
        nlos = root * nlos;
    }
    if let Some(root) = correlation_root(&scen.corr_bs, m)? {
        nlos = nlos * root.transpose();
    }
    let k = scen.rician_k;
    let (w_los, w_nlos) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
    };
    Ok((los * cr(w_los) + nlos * cr(w_nlos)) * cr(amp))
}

/// Rayleigh RIS-UE (`h1`) and BS-UE (`h2`) channels for every user.
pub fn gen_user_channels<R: Rng + ?Sized>(
    scen: &Scenario,
    rng: &mut R,
) -> Result<(Vec<CVector>, Vec<CVector>)> {
    let mut h1 = Vec::with_capacity(scen.k_users);
    let mut h2 = Vec::with_capacity(scen.k_users);
    for &ue in scen.ue_pos_m.iter().take(scen.k_users) {
        let a1 = pathloss_amp(dist(scen.ris_pos_m, ue), scen.alpha, scen.pl0_db)?;
        let a2 = pathloss_amp(dist(scen.bs_pos_m, ue), scen.alpha, scen.pl0_db)?;
        h1.push(rayleigh_vector(scen.n_ris, a1, rng));
        h2.push(rayleigh_vector(scen.m_antennas, a2, rng));
    }
    Ok((h1, h2))
}

/// Round-trip RIS-target-RIS amplitude `sqrt(lambda^2 S / ((4 pi)^3 R^4))`.
pub fn radar_pathloss(lambda_m: f64, rcs_m2: f64, r_m: f64) -> Result<f64> {
    if !(r_m > 0.0) {
        return Err(Error::Domain(format!("radar range {r_m} m must be positive")));
    }
    Ok((lambda_m * lambda_m * rcs_m2 / ((4.0 * PI).powi(3) * r_m.powi(4))).sqrt())
}

/// Point-target response `beta_r a3(theta3) a3(theta3)^H`.
pub fn target_response(scen: &Scenario, beta_r: f64, theta3: f64) -> CMatrix {
    outer(&steering(scen.n_ris, 0.5, theta3)) * cr(beta_r)
}

/// Thermal noise power in watts for a density in dBm/Hz over `bandwidth_hz`.
pub fn noise_power(density_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((density_dbm_hz + 10.0 * bandwidth_hz.log10() - 30.0) / 10.0)
}
