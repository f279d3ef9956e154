//! Large-scale THz path gain, received power and SINR.

use crate::params::Model;

/// `W(d) = exp(-eps * r) / r^2` with `r^2 = d^2 + delta_h^2`.
pub fn path_gain(d: f64, delta_h: f64, eps_f: f64) -> f64 {
    let r2 = d * d + delta_h * delta_h;
    (-eps_f * r2.sqrt()).exp() / r2
}

/// Per-link power budget: mainlobe power without pointing loss, and noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub w: f64,
    pub zeta: f64,
    pub noise: f64,
}

impl LinkBudget {
    pub fn new(model: &Model, d: f64) -> Self {
        let w = path_gain(d, model.consts.delta_h, model.params.eps_f);
        LinkBudget {
            w,
            zeta: model.params.p_t * model.consts.xi * model.consts.g_max * w,
            noise: model.params.n_0,
        }
    }
}

pub fn serving_power(d: f64, h_pe: f64, model: &Model) -> f64 {
    LinkBudget::new(model, d).zeta * h_pe
}

/// Received power from an unblocked interferer at horizontal distance `d`.
pub fn interference_power(d: f64, model: &Model) -> f64 {
    model.params.p_t * model.consts.g_s * model.consts.xi * path_gain(d, model.consts.delta_h, model.params.eps_f)
}

pub fn sinr(serving: f64, interference: f64, noise: f64) -> f64 {
    serving / (interference + noise)
}
