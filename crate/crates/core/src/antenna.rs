//! Array gains, pointing-error loss models and their distribution.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::SystemParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AntennaError {
    #[error("mainlobe beamwidths must lie in (0, pi) (got phi_V={phi_v}, phi_H={phi_h})")]
    Beamwidth { phi_v: f64, phi_h: f64 },
    #[error("degenerate beamwidths: arcsin argument {0} is outside [-1, 1]")]
    Degenerate(f64),
}

/// Power loss of an `n x n` half-wave spaced planar array steered at
/// broadside, seen from a direction offset by `theta_v`, `theta_h`.
///
/// The offsets are the tangent-plane angles of the two array axes; the
/// direction cosines along the axes are `tan(theta) / sqrt(1 + tan^2 theta_v + tan^2 theta_h)`.
pub fn array_factor_loss(theta_v: f64, theta_h: f64, n: u32) -> f64 {
    let (tv, th) = (theta_v.tan(), theta_h.tan());
    let norm = (1.0 + tv * tv + th * th).sqrt();
    let u = tv / norm;
    let v = th / norm;
    let f = axis_factor(u, n) * axis_factor(v, n);
    f * f
}

/// `sin(N pi u / 2) / (N sin(pi u / 2))`.
fn axis_factor(u: f64, n: u32) -> f64 {
    let nf = n as f64;
    let x = FRAC_PI_2 * u;
    if x.abs() < 1e-8 {
        return 1.0 - (nf * nf - 1.0) * x * x / 6.0;
    }
    (nf * x).sin() / (nf * x.sin())
}

pub fn gaussian_loss(theta: f64, omega_a: f64) -> f64 {
    let r = theta / omega_a;
    (-r * r).exp()
}

/// Residual angular offsets after beam training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamOffsets {
    pub theta_h: f64,
    pub theta_v: f64,
    /// Small-angle total offset `sqrt(theta_V^2 + theta_H^2)`.
    pub theta: f64,
    pub phi: f64,
}

impl BeamOffsets {
    pub fn new(theta_v: f64, theta_h: f64) -> Self {
        BeamOffsets {
            theta_h,
            theta_v,
            theta: theta_v.hypot(theta_h),
            phi: theta_v.atan2(theta_h),
        }
    }

    /// Independent offsets, uniform on `(-omega_t, omega_t)` per axis.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, omega_t: f64) -> Self {
        let theta_h = (2.0 * rng.random::<f64>() - 1.0) * omega_t;
        let theta_v = (2.0 * rng.random::<f64>() - 1.0) * omega_t;
        BeamOffsets::new(theta_v, theta_h)
    }
}

/// Mainlobe model used when sampling the pointing loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PointingModel {
    #[default]
    Gaussian,
    ArrayFactor,
}

impl PointingModel {
    pub fn name(self) -> &'static str {
        match self {
            PointingModel::Gaussian => "gaussian",
            PointingModel::ArrayFactor => "array_factor",
        }
    }
}

impl fmt::Display for PointingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PointingModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(PointingModel::Gaussian),
            "array_factor" => Ok(PointingModel::ArrayFactor),
            other => Err(format!(
                "unknown pointing model '{other}' (expected gaussian or array_factor)"
            )),
        }
    }
}

/// Draws one pointing loss for an `n x n` AP array trained with beamwidth `omega_t`.
pub fn sample_pointing_loss<R: Rng + ?Sized>(
    rng: &mut R,
    model: PointingModel,
    omega_t: f64,
    n: u32,
) -> f64 {
    let o = BeamOffsets::sample(rng, omega_t);
    match model {
        PointingModel::Gaussian => gaussian_loss(o.theta, crate::params::GAUSSIAN_BEAM_SCALE / n as f64),
        PointingModel::ArrayFactor => array_factor_loss(o.theta_v, o.theta_h, n),
    }
}

/// Distribution of the Gaussian-beam pointing loss under uniform offsets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointingErrorDist {
    pub omega_t: f64,
    pub omega_a: f64,
    pub omega_1: f64,
}

impl PointingErrorDist {
    pub fn new(omega_t: f64, omega_a: f64) -> Self {
        let r = omega_t / omega_a;
        PointingErrorDist {
            omega_t,
            omega_a,
            omega_1: (-r * r).exp(),
        }
    }

    pub fn from_params(p: &SystemParams) -> Self {
        PointingErrorDist::new(p.omega_t, p.omega_a())
    }

    /// Support `[omega_1^2, 1]`.
    pub fn support(&self) -> (f64, f64) {
        (self.omega_1 * self.omega_1, 1.0)
    }

    fn ratio(&self) -> f64 {
        let r = self.omega_a / self.omega_t;
        r * r
    }

    /// `(rho_1, rho_2)` at `h` in the lower branch.
    fn rhos(&self, h: f64) -> (f64, f64) {
        let s = -self.omega_a * self.omega_a * h.ln();
        let rho1 = (self.omega_t / s.sqrt()).min(1.0).asin();
        let rho2 = (s - self.omega_t * self.omega_t).max(0.0).sqrt() / self.omega_t;
        (rho1, rho2)
    }

    pub fn pdf(&self, h: f64) -> f64 {
        let (lo, _) = self.support();
        if h > 1.0 || h < lo || !(h > 0.0) {
            0.0
        } else if h >= self.omega_1 {
            PI * self.ratio() / (4.0 * h)
        } else {
            let (rho1, _) = self.rhos(h);
            self.ratio() / h * (rho1 - FRAC_PI_4)
        }
    }

    pub fn cdf(&self, h: f64) -> f64 {
        let (lo, _) = self.support();
        let v = if h >= 1.0 {
            1.0
        } else if h < lo || !(h > 0.0) {
            0.0
        } else if h >= self.omega_1 {
            1.0 + PI * self.ratio() * h.ln() / 4.0
        } else {
            let (rho1, rho2) = self.rhos(h);
            1.0 + self.ratio() * h.ln() * (rho1 - FRAC_PI_4) - rho2
        };
        v.clamp(0.0, 1.0)
    }

    /// Derivative of [`pdf`](Self::pdf). At `h = omega_1` this is the
    /// right limit.
    pub fn pdf_derivative(&self, h: f64) -> f64 {
        let (lo, _) = self.support();
        if h > 1.0 || h < lo || !(h > 0.0) {
            0.0
        } else if h >= self.omega_1 {
            -PI * self.ratio() / (4.0 * h * h)
        } else {
            let (rho1, rho2) = self.rhos(h);
            let k = self.ratio() / (h * h);
            -k * (rho1 - FRAC_PI_4) - k / (2.0 * rho2 * h.ln())
        }
    }
}

/// Cone-model sidelobe gain of an `n x n` array with mainlobe beamwidths
/// `phi_v`, `phi_h`.
pub fn sidelobe_gain(n: u32, phi_v: f64, phi_h: f64) -> Result<f64, AntennaError> {
    let ok = |phi: f64| phi > 0.0 && phi < PI;
    if !ok(phi_v) || !ok(phi_h) {
        return Err(AntennaError::Beamwidth { phi_v, phi_h });
    }
    let arg = (phi_v / 2.0).tan() * (phi_h / 2.0).tan();
    if !(-1.0..=1.0).contains(&arg) {
        return Err(AntennaError::Degenerate(arg));
    }
    let a = arg.asin();
    let n2 = (n as f64) * (n as f64);
    Ok((PI - n2 * PI * a) / (PI - a))
}
