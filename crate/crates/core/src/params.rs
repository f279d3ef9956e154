//! System parameters, their validation, and the constants derived from them.
//!
//! Everything is stored in linear SI units. Powers and thresholds that are
//! conventionally quoted in dBm/dB are converted once, at the boundary, with
//! the helpers at the bottom of this module.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::sidelobe_gain;

/// Speed of light used by the free-space factor, fixed at 3e8 m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Gaussian-beam angular scale numerator: `omega_A = 1.06 / N`.
pub const GAUSSIAN_BEAM_SCALE: f64 = 1.06;

/// Default mainlobe beamwidth of the cone sidelobe model in units of
/// `1.06 / N`: the half-power beamwidth `2 * 0.886 / N` of a half-wave
/// spaced uniform array.
pub const DEFAULT_PHI_SCALE: f64 = 2.0 * 0.886 / GAUSSIAN_BEAM_SCALE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("heights must satisfy h_U < h_B < h_A (got h_U={h_u}, h_B={h_b}, h_A={h_a})")]
    HeightOrder { h_u: f64, h_b: f64, h_a: f64 },
    #[error("{field} must be {requirement} (got {value})")]
    OutOfRange {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("antenna counts must satisfy N_A >= N_U >= 1 (got N_A={n_a}, N_U={n_u})")]
    AntennaCounts { n_a: u32, n_u: u32 },
    #[error("N_RF must be at least 1")]
    RfChains,
    #[error(
        "sidelobe gain of the {side} array is {gain}; the mainlobe beamwidth \
         (phi_scale={phi_scale}) leaves no power for the sidelobes"
    )]
    SidelobeGain {
        side: &'static str,
        gain: f64,
        phi_scale: f64,
    },
}

/// AP deployment topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Square,
    Hexagonal,
    /// Poisson-deployed APs; only the simulator supports it.
    Ppp,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Square => "square",
            Topology::Hexagonal => "hexagonal",
            Topology::Ppp => "ppp",
        }
    }

    pub fn is_grid(self) -> bool {
        !matches!(self, Topology::Ppp)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(Topology::Square),
            "hexagonal" | "hex" => Ok(Topology::Hexagonal),
            "ppp" => Ok(Topology::Ppp),
            other => Err(format!(
                "unknown topology '{other}' (expected square, hexagonal or ppp)"
            )),
        }
    }
}

/// The full parameter record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// AP (ceiling) height, m.
    pub h_a: f64,
    /// UE height, m.
    pub h_u: f64,
    /// Human body height, m.
    pub h_b: f64,
    /// Human body radius, m.
    pub r_b: f64,
    /// Human density, m^-2.
    pub lambda_b: f64,
    /// Wall density per axis, m^-1.
    pub lambda_w: f64,
    /// Inter-AP distance, m.
    pub d_ap: f64,
    /// Horizontal coverage radius, m.
    pub r_a: f64,
    /// AP array side length (N_A x N_A elements).
    pub n_a: u32,
    /// UE array side length.
    pub n_u: u32,
    /// Carrier frequency, Hz.
    pub freq: f64,
    /// Bandwidth, Hz. Carried for provenance; no formula uses it.
    pub bandwidth: f64,
    /// Molecular absorption coefficient, m^-1.
    pub eps_f: f64,
    /// Transmit power, W.
    pub p_t: f64,
    /// Noise power, W.
    pub n_0: f64,
    /// Training beamwidth (half-width of the residual angular offset), rad.
    pub omega_t: f64,
    /// RF chains per AP.
    pub n_rf: u32,
    /// Beam-training SINR threshold, linear.
    pub beta_ct: f64,
    pub topology: Topology,
    /// Cone-model mainlobe beamwidth in units of `1.06 / N`.
    pub phi_scale: f64,
}

impl Default for SystemParams {
    /// Table 1 of the reference deployment.
    fn default() -> Self {
        SystemParams {
            h_a: 3.0,
            h_u: 1.3,
            h_b: 1.7,
            r_b: 0.25,
            lambda_b: 0.1,
            lambda_w: 0.02,
            d_ap: 15.0,
            r_a: 15.0,
            n_a: 16,
            n_u: 2,
            freq: 300e9,
            bandwidth: 5e9,
            eps_f: 0.00143,
            p_t: dbm_to_watts(5.0),
            n_0: dbm_to_watts(-77.0),
            omega_t: 0.0554,
            n_rf: 6,
            beta_ct: db_to_linear(10.0),
            topology: Topology::Square,
            phi_scale: DEFAULT_PHI_SCALE,
        }
    }
}

fn check(
    field: &'static str,
    value: f64,
    ok: bool,
    requirement: &'static str,
) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::OutOfRange {
            field,
            requirement,
            value,
        })
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.h_u < self.h_b && self.h_b < self.h_a) || !self.h_u.is_finite() {
            return Err(ParamError::HeightOrder {
                h_u: self.h_u,
                h_b: self.h_b,
                h_a: self.h_a,
            });
        }
        check("h_U", self.h_u, self.h_u >= 0.0, "non-negative")?;
        check("h_A", self.h_a, self.h_a.is_finite(), "finite")?;
        check("R_B", self.r_b, self.r_b > 0.0, "positive")?;
        check("lambda_B", self.lambda_b, self.lambda_b >= 0.0, "non-negative")?;
        check("lambda_W", self.lambda_w, self.lambda_w >= 0.0, "non-negative")?;
        check("d_AP", self.d_ap, self.d_ap > 0.0, "positive")?;
        check("R_A", self.r_a, self.r_a > 0.0, "positive")?;
        check("f", self.freq, self.freq > 0.0, "positive")?;
        check("B", self.bandwidth, self.bandwidth > 0.0, "positive")?;
        check("eps_f", self.eps_f, self.eps_f >= 0.0, "non-negative")?;
        check("P_t", self.p_t, self.p_t >= 0.0, "non-negative")?;
        check("N_0", self.n_0, self.n_0 > 0.0, "positive")?;
        check(
            "omega_T",
            self.omega_t,
            self.omega_t > 0.0 && self.omega_t < PI / 2.0,
            "in (0, pi/2)",
        )?;
        check("beta_ct", self.beta_ct, self.beta_ct > 0.0, "positive")?;
        check("phi_scale", self.phi_scale, self.phi_scale > 0.0, "positive")?;
        if self.n_u < 1 || self.n_a < self.n_u {
            return Err(ParamError::AntennaCounts {
                n_a: self.n_a,
                n_u: self.n_u,
            });
        }
        if self.n_rf < 1 {
            return Err(ParamError::RfChains);
        }
        Ok(())
    }

    pub fn delta_h(&self) -> f64 {
        self.h_a - self.h_u
    }

    /// Human blockage rate per metre of horizontal link length.
    pub fn alpha(&self) -> f64 {
        2.0 * self.lambda_b * self.r_b * (self.h_b - self.h_u) / self.delta_h()
    }

    pub fn xi(&self) -> f64 {
        let k = 4.0 * PI * self.freq;
        SPEED_OF_LIGHT * SPEED_OF_LIGHT / (k * k)
    }

    pub fn omega_a(&self) -> f64 {
        GAUSSIAN_BEAM_SCALE / self.n_a as f64
    }

    pub fn omega_1(&self) -> f64 {
        let r = self.omega_t / self.omega_a();
        (-r * r).exp()
    }

    /// Cone-model mainlobe beamwidth of an `n`-element-per-side array.
    pub fn mainlobe_beamwidth(&self, n: u32) -> f64 {
        self.phi_scale * GAUSSIAN_BEAM_SCALE / n as f64
    }
}

/// Constants shared by every formula of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub delta_h: f64,
    pub alpha: f64,
    pub xi: f64,
    pub omega_a: f64,
    pub omega_1: f64,
    pub g_a_max: f64,
    pub g_u_max: f64,
    pub g_max: f64,
    pub g_s_ap: f64,
    pub g_s_ue: f64,
    pub g_s: f64,
}

pub fn max_gain(n: u32) -> f64 {
    let n = n as f64;
    PI * n * n
}

fn array_sidelobe(p: &SystemParams, n: u32, side: &'static str) -> Result<f64, ParamError> {
    if n == 1 {
        // a single element has no mainlobe to carve out
        return Ok(1.0);
    }
    let phi = p.mainlobe_beamwidth(n);
    let bad = |gain: f64| ParamError::SidelobeGain {
        side,
        gain,
        phi_scale: p.phi_scale,
    };
    match sidelobe_gain(n, phi, phi) {
        Ok(g) if g > 0.0 => Ok(g),
        Ok(g) => Err(bad(g)),
        Err(_) => Err(bad(f64::NAN)),
    }
}

pub fn derive_constants(p: &SystemParams) -> Result<DerivedConstants, ParamError> {
    p.validate()?;
    let g_a_max = max_gain(p.n_a);
    let g_u_max = max_gain(p.n_u);
    let g_s_ap = array_sidelobe(p, p.n_a, "AP")?;
    let g_s_ue = array_sidelobe(p, p.n_u, "UE")?;
    Ok(DerivedConstants {
        delta_h: p.delta_h(),
        alpha: p.alpha(),
        xi: p.xi(),
        omega_a: p.omega_a(),
        omega_1: p.omega_1(),
        g_a_max,
        g_u_max,
        g_max: g_a_max * g_u_max,
        g_s_ap,
        g_s_ue,
        g_s: g_s_ap * g_s_ue,
    })
}

/// Validated parameters bundled with their derived constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Model {
    pub params: SystemParams,
    pub consts: DerivedConstants,
}

impl Model {
    pub fn new(params: SystemParams) -> Result<Self, ParamError> {
        let consts = derive_constants(&params)?;
        Ok(Model { params, consts })
    }

    /// Copy of this model with `edit` applied to the parameters.
    pub fn with(&self, edit: impl FnOnce(&mut SystemParams)) -> Result<Self, ParamError> {
        let mut params = self.params.clone();
        edit(&mut params);
        Model::new(params)
    }

    pub fn topology(&self) -> Topology {
        self.params.topology
    }
}

impl Default for Model {
    fn default() -> Self {
        Model::new(SystemParams::default()).expect("default parameters are valid")
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
