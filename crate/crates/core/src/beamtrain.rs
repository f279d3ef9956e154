//! Beam-training overhead: training-phase interference, the bound on
//! concurrent training beams and the number of hierarchical stages.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, ShellBound, DEFAULT_TRUNC_EPSILON};
use crate::blockage::{human_unblocked, wall_unblocked};
use crate::channel::path_gain;
use crate::geometry::{representative_location, Lattice, TIE_TOLERANCE};
use crate::params::{Model, ParamError, GAUSSIAN_BEAM_SCALE};
use crate::special::bessel_i0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainingError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("inter-AP interference approximation diverges: alpha + eps_f must be positive")]
    NonConvergent,
    #[error(
        "beam training infeasible: SINR target beta_ct is unreachable even with one beam \
         (concurrent-beam bound evaluates to {bound:.4})"
    )]
    Infeasible { bound: f64 },
    #[error("no hierarchical reduction possible with one concurrent beam per stage")]
    SingleBeam,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Which terms the inter-AP training interference sum carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceForm {
    /// Sidelobe gain and wall blockage included.
    #[default]
    Full,
    /// Transmit power, path gain and human blockage only.
    Bare,
}

/// Where the inter-AP interference in `eta` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    /// Bessel-function closed form.
    #[default]
    Approx,
    /// Truncated lattice sum.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingOptions {
    pub form: InterferenceForm,
    pub eta_source: EtaSource,
    pub trunc_epsilon: f64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            form: InterferenceForm::Full,
            eta_source: EtaSource::Approx,
            trunc_epsilon: DEFAULT_TRUNC_EPSILON,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainingBudget {
    pub i_intra: f64,
    pub i_inter: f64,
    pub eta: f64,
    pub n_ct_max: u64,
    pub n_ct: u64,
    pub n_bt: u32,
    pub beam_count: f64,
}

/// Interference among the `n_ct` concurrent beams of the serving AP.
pub fn intra_interference(model: &Model, n_ct: u64) -> Result<f64, TrainingError> {
    if n_ct < 1 {
        return Err(TrainingError::InvalidArgument("N_ct must be at least 1".into()));
    }
    let p = &model.params;
    let c = &model.consts;
    let k = n_ct as f64;
    Ok((k - 1.0) / k * p.p_t * c.g_s * c.xi * path_gain(p.r_a, c.delta_h, p.eps_f))
}

fn inter_shells(model: &Model, lat: &Lattice, form: InterferenceForm) -> ShellBound {
    let p = &model.params;
    let c = &model.consts;
    match form {
        InterferenceForm::Full => ShellBound::for_lattice(lat, p.p_t * c.g_s * c.xi, c.alpha + p.lambda_w + p.eps_f, c.delta_h),
        InterferenceForm::Bare => ShellBound::for_lattice(lat, p.p_t * c.xi, c.alpha + p.eps_f, c.delta_h),
    }
}

/// Inter-AP training interference at the cell-edge UE, summed over the APs
/// beyond `R_A` and truncated so the neglected tail is below `epsilon`.
pub fn inter_interference_exact(model: &Model, form: InterferenceForm, epsilon: f64) -> Result<f64, TrainingError> {
    let lat = Lattice::new(model.topology(), model.params.d_ap).map_err(AnalysisError::from)?;
    let radius = inter_shells(model, &lat, form).radius_for(model.params.r_a, epsilon)?.radius;
    inter_interference_at_radius(model, form, radius)
}

/// As [`inter_interference_exact`] over the APs within `radius` m.
pub fn inter_interference_at_radius(model: &Model, form: InterferenceForm, radius: f64) -> Result<f64, TrainingError> {
    let p = &model.params;
    let c = &model.consts;
    let topology = model.topology();
    let lat = Lattice::new(topology, p.d_ap).map_err(AnalysisError::from)?;
    let ue = representative_location(topology, 3).map_err(AnalysisError::from)?;
    let edge = p.r_a * (1.0 + TIE_TOLERANCE);
    let mut sum = 0.0;
    for (_, l) in lat.aps_within(ue, radius) {
        if l.d <= edge {
            continue;
        }
        let w = path_gain(l.d, c.delta_h, p.eps_f);
        let ph = human_unblocked(l.d, c.alpha);
        sum += match form {
            InterferenceForm::Full => p.p_t * c.g_s * c.xi * ph * wall_unblocked(l.d_x(), l.d_y(), p.lambda_w) * w,
            InterferenceForm::Bare => p.p_t * c.xi * ph * w,
        };
    }
    Ok(sum)
}

/// Continuum approximation of the inter-AP training interference.
pub fn inter_interference_approx(model: &Model) -> Result<f64, TrainingError> {
    let p = &model.params;
    let c = &model.consts;
    let decay = c.alpha + p.eps_f;
    if !(decay > 0.0) {
        return Err(TrainingError::NonConvergent);
    }
    let r = p.r_a;
    let w = path_gain(r, c.delta_h, p.eps_f);
    Ok(2.0 * PI * p.p_t * c.g_s * c.xi * r * (-c.alpha * r).exp() * w / (p.d_ap * p.d_ap * decay)
        * bessel_i0(std::f64::consts::SQRT_2 * p.lambda_w * r))
}

/// Interference-plus-noise at the cell edge relative to the unit-gain received power.
pub fn eta(model: &Model, i_inter: f64) -> f64 {
    let p = &model.params;
    let c = &model.consts;
    (i_inter + p.n_0) / (p.p_t * c.xi * path_gain(p.r_a, c.delta_h, p.eps_f))
}

/// Largest number of concurrent training beams meeting `beta_ct` at the cell edge.
pub fn max_concurrent_beams_for_eta(model: &Model, eta: f64) -> Result<u64, TrainingError> {
    let c = &model.consts;
    let beta = model.params.beta_ct;
    let bound = (c.omega_1 * c.omega_1 * c.g_max + beta * c.g_s) / (beta * (c.g_s + eta));
    if !(bound >= 1.0) {
        return Err(TrainingError::Infeasible { bound });
    }
    Ok(if bound >= u64::MAX as f64 { u64::MAX } else { bound.floor() as u64 })
}

pub fn inter_interference(model: &Model, opts: &TrainingOptions) -> Result<f64, TrainingError> {
    match opts.eta_source {
        EtaSource::Approx => inter_interference_approx(model),
        EtaSource::Exact => inter_interference_exact(model, opts.form, opts.trunc_epsilon),
    }
}

pub fn max_concurrent_beams(model: &Model, opts: &TrainingOptions) -> Result<u64, TrainingError> {
    max_concurrent_beams_for_eta(model, eta(model, inter_interference(model, opts)?))
}

/// Beams needed to tile the coverage cone at the trained resolution.
pub fn beam_count(model: &Model) -> f64 {
    let p = &model.params;
    4.0 * PI * (p.r_a / model.consts.delta_h).atan() / (p.omega_t * p.omega_t)
}

/// Stages of a hierarchy refining by `n_ct` beams per stage; at least one.
pub fn training_stages_for(model: &Model, n_ct: u64) -> Result<u32, TrainingError> {
    if n_ct < 2 {
        return Err(TrainingError::SingleBeam);
    }
    let x = beam_count(model).ln() / (n_ct as f64).ln();
    Ok(((x - 1e-12).ceil()).max(1.0) as u32)
}

pub fn training_budget(model: &Model, opts: &TrainingOptions) -> Result<TrainingBudget, TrainingError> {
    let i_inter = inter_interference(model, opts)?;
    let eta = eta(model, i_inter);
    let n_ct_max = max_concurrent_beams_for_eta(model, eta)?;
    let n_ct = n_ct_max.min(model.params.n_rf as u64);
    Ok(TrainingBudget {
        i_intra: intra_interference(model, n_ct)?,
        i_inter,
        eta,
        n_ct_max,
        n_ct,
        n_bt: training_stages_for(model, n_ct)?,
        beam_count: beam_count(model),
    })
}

/// How the trained beamwidth follows the array size in an array sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    Fixed,
    /// `omega_T = kappa * 1.06 / N_A`.
    Tied { kappa: f64 },
}

impl OmegaMode {
    /// The tie that reproduces `omega_t` at `n_a` elements per side.
    pub fn tied_at(omega_t: f64, n_a: u32) -> Self {
        OmegaMode::Tied {
            kappa: omega_t * n_a as f64 / GAUSSIAN_BEAM_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrayPoint {
    pub n_a: u32,
    pub omega_t: f64,
    /// `None` when training is infeasible at this array size.
    pub budget: Option<TrainingBudget>,
}

impl ArrayPoint {
    /// Stage count, infinite when infeasible.
    pub fn stages(&self) -> f64 {
        self.budget.map_or(f64::INFINITY, |b| b.n_bt as f64)
    }
}

/// Training budget across array sizes; infeasible sizes are kept as `None`.
pub fn array_sweep(
    model: &Model,
    n_a_values: &[u32],
    mode: OmegaMode,
    opts: &TrainingOptions,
) -> Result<Vec<ArrayPoint>, TrainingError> {
    n_a_values
        .iter()
        .map(|&n_a| {
            let omega_t = match mode {
                OmegaMode::Fixed => model.params.omega_t,
                OmegaMode::Tied { kappa } => kappa * GAUSSIAN_BEAM_SCALE / n_a as f64,
            };
            let m = model.with(|p| {
                p.n_a = n_a;
                p.omega_t = omega_t;
            })?;
            let budget = match training_budget(&m, opts) {
                Ok(b) => Some(b),
                Err(TrainingError::Infeasible { .. } | TrainingError::SingleBeam) => None,
                Err(e) => return Err(e),
            };
            Ok(ArrayPoint { n_a, omega_t, budget })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Topology;
    use proptest::prelude::*;

    #[test]
    fn intra_examples() {
        let m = Model::default();
        assert_eq!(intra_interference(&m, 1).unwrap(), 0.0);
        let full = m.params.p_t * m.consts.g_s * m.consts.xi * 0.0042944;
        assert!((intra_interference(&m, 6).unwrap() / (full * 5.0 / 6.0) - 1.0).abs() < 1e-4);
        assert!((intra_interference(&m, 1 << 40).unwrap() / full - 1.0).abs() < 1e-4);
        assert!(intra_interference(&m, 0).is_err());
    }

    #[test]
    fn stage_count_examples() {
        let m = Model::default();
        assert!((beam_count(&m) - 5969.5).abs() < 0.5);
        assert_eq!(training_stages_for(&m, 6).unwrap(), 5);
        assert_eq!(training_stages_for(&m, 1), Err(TrainingError::SingleBeam));
        let wide = m.with(|p| p.omega_t *= 2.0).unwrap();
        assert!((beam_count(&wide) * 4.0 / beam_count(&m) - 1.0).abs() < 1e-12);
        assert!(training_stages_for(&wide, 6).unwrap() <= 5);
        assert_eq!(training_stages_for(&m, 100_000).unwrap(), 1);
    }

    #[test]
    fn exact_sum_examples() {
        let m = Model::default();
        let off = m.with(|p| p.p_t = 0.0).unwrap();
        assert_eq!(inter_interference_exact(&off, InterferenceForm::Full, 1e-24).unwrap(), 0.0);
        for form in [InterferenceForm::Full, InterferenceForm::Bare] {
            let a = inter_interference_exact(&m, form, 1e-24).unwrap();
            let far = m.with(|p| p.d_ap *= 2.0).unwrap();
            assert!(inter_interference_exact(&far, form, 1e-24).unwrap() < a);
            let lat = Lattice::new(Topology::Square, 15.0).unwrap();
            let r = inter_shells(&m, &lat, form).radius_for(15.0, 1e-24).unwrap().radius;
            let b = inter_interference_at_radius(&m, form, 2.0 * r).unwrap();
            assert!(((a - b) / b).abs() < 1e-9);
        }
    }

    #[test]
    fn approx_examples() {
        let m = Model::default().with(|p| p.lambda_w = 0.0).unwrap();
        let c = &m.consts;
        let p = &m.params;
        let w = path_gain(p.r_a, c.delta_h, p.eps_f);
        let bare = 2.0 * PI * p.p_t * c.g_s * c.xi * p.r_a * (-c.alpha * p.r_a).exp() * w / (p.d_ap * p.d_ap * (c.alpha + p.eps_f));
        assert!((inter_interference_approx(&m).unwrap() / bare - 1.0).abs() < 1e-14);
        let dry = m.with(|p| {
            p.lambda_b = 0.0;
            p.eps_f = 0.0;
        })
        .unwrap();
        assert_eq!(inter_interference_approx(&dry), Err(TrainingError::NonConvergent));
        // decays along R once alpha exceeds sqrt(2) lambda_W
        let base = Model::default().with(|p| p.lambda_w = 0.005).unwrap();
        let mut last = f64::INFINITY;
        for r in [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0] {
            let v = inter_interference_approx(&base.with(|p| p.r_a = r).unwrap()).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn concurrent_beam_bound() {
        let m = Model::default();
        let small = m.with(|p| p.beta_ct = 1e-6).unwrap();
        assert!(max_concurrent_beams(&small, &TrainingOptions::default()).unwrap() > 1000);
        let hard = m.with(|p| p.beta_ct = 1e6).unwrap();
        assert!(matches!(
            max_concurrent_beams(&hard, &TrainingOptions::default()),
            Err(TrainingError::Infeasible { .. })
        ));
        // noise-limited: the interference barely moves eta
        let e = eta(&m, 0.0);
        let n = (m.consts.omega_1.powi(2) * m.consts.g_max + m.params.beta_ct * m.consts.g_s)
            / (m.params.beta_ct * (m.consts.g_s + e));
        assert_eq!(max_concurrent_beams_for_eta(&m, e).unwrap(), n.floor() as u64);
    }

    #[test]
    fn tied_sweep_recovers_base_point() {
        let m = Model::default();
        let mode = OmegaMode::tied_at(m.params.omega_t, 16);
        let pts = array_sweep(&m, &[16], mode, &TrainingOptions::default()).unwrap();
        assert!((pts[0].omega_t - m.params.omega_t).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn stages_monotone(n in 2u64..64, extra in 1u64..64, ra in 5.0f64..40.0, step in 0.0f64..20.0) {
            let m = Model::default().with(|p| p.r_a = ra).unwrap();
            prop_assert!(training_stages_for(&m, n + extra).unwrap() <= training_stages_for(&m, n).unwrap());
            let wider = m.with(|p| p.r_a = ra + step).unwrap();
            prop_assert!(training_stages_for(&wider, n).unwrap() >= training_stages_for(&m, n).unwrap());
        }

        #[test]
        fn bound_monotone(b in -20.0f64..20.0, gap in 0.0f64..10.0, e in 0.0f64..500.0, de in 0.0f64..500.0) {
            let at = |bdb: f64, eta: f64| {
                let m = Model::default().with(|p| p.beta_ct = 10f64.powf(bdb / 10.0)).unwrap();
                max_concurrent_beams_for_eta(&m, eta).unwrap_or(0)
            };
            prop_assert!(at(b + gap, e) <= at(b, e));
            prop_assert!(at(b, e + de) <= at(b, e));
        }
    }
}
