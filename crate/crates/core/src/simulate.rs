//! Monte Carlo scene simulator: walls, humans and beam offsets are drawn
//! explicitly and association and SINR are evaluated per trial.
//!
//! Every random quantity of trial `t` comes from a ChaCha stream keyed by
//! `(seed, substream)` and positioned at stream `t`, so a trial can be
//! replayed alone and estimates do not depend on how trials are scheduled.
//! Trials are processed in fixed-size chunks whose partial results are
//! merged in chunk order.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{truncation_radius, AnalysisError, InterferenceBound};
use crate::antenna::{sample_pointing_loss, PointingModel};
use crate::channel::{interference_power, path_gain, LinkBudget};
use crate::geometry::{cmp_distance, ApIndex, GeometryError, Lattice, LinkGeometry, UeLocation};
use crate::params::{Model, Topology};

/// Smallest trial count accepted by the estimators.
pub const MIN_TRIALS: u64 = 1000;

/// Default truncation tolerance on the neglected interference, W.
pub const DEFAULT_SIM_TRUNC_EPSILON: f64 = 1e-15;

const CHUNK: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("at least {MIN_TRIALS} trials are required (got {0})")]
    TooFewTrials(u64),
    #[error("no trial had the serving link ({i}, {j}) wall-unblocked after {attempts} attempts")]
    NoAcceptedTrials { i: i64, j: i64, attempts: u64 },
    #[error("{0}")]
    InvalidArgument(String),
}

/// Independent random substreams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substream {
    WallsX = 1,
    WallsY = 2,
    Humans = 3,
    Beam = 4,
    Aps = 5,
}

pub fn trial_rng(seed: u64, trial: u64, substream: Substream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = substream as u8;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

/// How humans block links.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HumanModel {
    /// Each link's blockage zone is drawn independently: one uniform per
    /// link, blocked when it exceeds `exp(-alpha d)`.
    #[default]
    IndependentZones,
    /// One Poisson field of human centres shared by all links.
    SharedField,
}

impl HumanModel {
    pub fn name(self) -> &'static str {
        match self {
            HumanModel::IndependentZones => "independent_zones",
            HumanModel::SharedField => "shared_field",
        }
    }
}

impl std::str::FromStr for HumanModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent_zones" => Ok(HumanModel::IndependentZones),
            "shared_field" => Ok(HumanModel::SharedField),
            other => Err(format!(
                "unknown human model '{other}' (expected independent_zones or shared_field)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub trunc_epsilon: f64,
    pub human_model: HumanModel,
    pub pointing: PointingModel,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            trunc_epsilon: DEFAULT_SIM_TRUNC_EPSILON,
            human_model: HumanModel::IndependentZones,
            pointing: PointingModel::Gaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    fn around(points: impl Iterator<Item = [f64; 2]>, pad: f64) -> Self {
        let mut w = Window {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for p in points {
            w.x_min = w.x_min.min(p[0]);
            w.x_max = w.x_max.max(p[0]);
            w.y_min = w.y_min.min(p[1]);
            w.y_max = w.y_max.max(p[1]);
        }
        w.x_min -= pad;
        w.x_max += pad;
        w.y_min -= pad;
        w.y_max += pad;
        w
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// One realization of the random environment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    /// x-coordinates of the walls parallel to the y axis, ascending.
    pub walls_x: Vec<f64>,
    /// y-coordinates of the walls parallel to the x axis, ascending.
    pub walls_y: Vec<f64>,
    /// Human centres (shared-field model only).
    pub humans: Vec<[f64; 2]>,
    /// One uniform per AP in link order (independent-zone model only).
    pub human_draws: Vec<f64>,
    /// AP positions when they are random; empty on a lattice.
    pub ap_positions: Vec<[f64; 2]>,
    pub pointing_loss: f64,
}

fn poisson_line<R: Rng>(rng: &mut R, rate: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    out.clear();
    if !(rate > 0.0) {
        return;
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = lo;
    loop {
        t += gap.sample(rng);
        if t >= hi {
            break;
        }
        out.push(t);
    }
}

fn poisson_field<R: Rng>(rng: &mut R, density: f64, w: &Window, out: &mut Vec<[f64; 2]>) {
    out.clear();
    let mean = density * w.area();
    if !(mean > 0.0) {
        return;
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    out.extend((0..n).map(|_| {
        [
            w.x_min + (w.x_max - w.x_min) * rng.random::<f64>(),
            w.y_min + (w.y_max - w.y_min) * rng.random::<f64>(),
        ]
    }));
}

fn any_strictly_between(walls: &[f64], a: f64, b: f64) -> bool {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let k = walls.partition_point(|&w| w <= lo);
    k < walls.len() && walls[k] < hi
}

/// True iff a wall crosses the horizontal segment between `ue` and `ap`.
pub fn wall_blocked(scene: &Scene, ue: [f64; 2], ap: [f64; 2]) -> bool {
    any_strictly_between(&scene.walls_x, ue[0], ap[0]) || any_strictly_between(&scene.walls_y, ue[1], ap[1])
}

/// Ground length of a link's human blockage zone, measured from the UE.
pub fn zone_length(d: f64, model: &Model) -> f64 {
    d * (model.params.h_b - model.params.h_u) / model.consts.delta_h
}

/// True iff a human centre lies in the link's blockage rectangle: width
/// `2 R_B` around the ground projection, from the UE towards the AP.
pub fn human_blocked(scene: &Scene, ue: [f64; 2], ap: [f64; 2], model: &Model) -> bool {
    let (dx, dy) = (ap[0] - ue[0], ap[1] - ue[1]);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return false;
    }
    let (ux, uy) = (dx / d, dy / d);
    let len = zone_length(d, model);
    let r_b = model.params.r_b;
    scene.humans.iter().any(|h| {
        let (vx, vy) = (h[0] - ue[0], h[1] - ue[1]);
        let t = vx * ux + vy * uy;
        t > 0.0 && t < len && (vx * uy - vy * ux).abs() < r_b
    })
}

/// A lattice AP as seen by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimAp {
    pub idx: ApIndex,
    pub pos: [f64; 2],
    pub link: LinkGeometry,
    /// Received power when unblocked and acting as an interferer, W.
    pub power: f64,
    /// Received power when serving with unit pointing loss, W.
    pub zeta: f64,
    pub p_h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub associated: Option<ApIndex>,
    pub sinr: f64,
    pub pointing_loss: f64,
}

/// Mean with a 95% normal-approximation half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_trials: u64,
}

impl Estimate {
    pub fn bernoulli(successes: u64, n: u64) -> Self {
        let p = successes as f64 / n as f64;
        Estimate {
            mean: p,
            half_width_95: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
            n_trials: n,
        }
    }

    /// Standard error, `half_width_95 / 1.96`.
    pub fn std_error(&self) -> f64 {
        self.half_width_95 / 1.96
    }
}

fn chunks(n: u64) -> Vec<Range<u64>> {
    (0..n.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(n)).collect()
}

fn check_trials(n: u64) -> Result<(), SimError> {
    if n < MIN_TRIALS {
        Err(SimError::TooFewTrials(n))
    } else {
        Ok(())
    }
}

/// Precomputed geometry for simulating one UE position on a lattice.
#[derive(Clone, Debug)]
pub struct SimSetup {
    model: Model,
    opts: SimOptions,
    pub ue: UeLocation,
    pub ue_pos: [f64; 2],
    /// APs within `radius`, in link order.
    pub aps: Vec<SimAp>,
    /// Number of leading APs within the coverage radius.
    pub n_in_range: usize,
    pub radius: f64,
    pub window: Window,
    pub human_window: Window,
}

impl SimSetup {
    /// Includes every AP whose interference matters to within `opts.trunc_epsilon`.
    pub fn new(model: &Model, ue: UeLocation, opts: &SimOptions) -> Result<Self, SimError> {
        let radius = truncation_radius(model, opts.trunc_epsilon)?.radius;
        SimSetup::within_radius(model, ue, radius, opts)
    }

    /// Includes the APs within `radius` m (at least `R_A`).
    pub fn within_radius(model: &Model, ue: UeLocation, radius: f64, opts: &SimOptions) -> Result<Self, SimError> {
        let lat = Lattice::new(model.topology(), model.params.d_ap)?;
        let radius = radius.max(model.params.r_a);
        let ue_pos = lat.ue_position(ue);
        let r_a = model.params.r_a * (1.0 + 1e-12);
        let aps: Vec<SimAp> = lat
            .aps_within(ue, radius)
            .into_iter()
            .map(|(idx, link)| SimAp {
                idx,
                pos: lat.ap_position(idx),
                link,
                power: interference_power(link.d, model),
                zeta: LinkBudget::new(model, link.d).zeta,
                p_h: (-model.consts.alpha * link.d).exp(),
            })
            .collect();
        let n_in_range = aps.iter().take_while(|a| a.link.d <= r_a).count();
        let r_b = model.params.r_b;
        let window = Window::around(aps.iter().map(|a| a.pos).chain([ue_pos]), r_b);
        let reach = zone_length(radius, model) + r_b;
        let human_window = Window {
            x_min: ue_pos[0] - reach,
            x_max: ue_pos[0] + reach,
            y_min: ue_pos[1] - reach,
            y_max: ue_pos[1] + reach,
        };
        Ok(SimSetup {
            model: model.clone(),
            opts: *opts,
            ue,
            ue_pos,
            aps,
            n_in_range,
            radius,
            window,
            human_window,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn realize_scene(&self, seed: u64, trial: u64) -> Scene {
        let mut scene = Scene::default();
        self.realize_scene_into(seed, trial, &mut scene);
        scene
    }

    /// Overwrites `scene` with trial `trial`'s realization.
    pub fn realize_scene_into(&self, seed: u64, trial: u64, scene: &mut Scene) {
        let lw = self.model.params.lambda_w;
        let w = &self.window;
        poisson_line(&mut trial_rng(seed, trial, Substream::WallsX), lw, w.x_min, w.x_max, &mut scene.walls_x);
        poisson_line(&mut trial_rng(seed, trial, Substream::WallsY), lw, w.y_min, w.y_max, &mut scene.walls_y);
        let mut hr = trial_rng(seed, trial, Substream::Humans);
        scene.humans.clear();
        scene.human_draws.clear();
        match self.opts.human_model {
            HumanModel::IndependentZones => scene.human_draws.extend((0..self.aps.len()).map(|_| hr.random::<f64>())),
            HumanModel::SharedField => poisson_field(&mut hr, self.model.params.lambda_b, &self.human_window, &mut scene.humans),
        }
        scene.ap_positions.clear();
        let p = &self.model.params;
        scene.pointing_loss = sample_pointing_loss(&mut trial_rng(seed, trial, Substream::Beam), self.opts.pointing, p.omega_t, p.n_a);
    }

    fn human_blocked_at(&self, scene: &Scene, k: usize) -> bool {
        match self.opts.human_model {
            HumanModel::IndependentZones => scene.human_draws[k] >= self.aps[k].p_h,
            HumanModel::SharedField => human_blocked(scene, self.ue_pos, self.aps[k].pos, &self.model),
        }
    }

    fn wall_blocked_at(&self, scene: &Scene, k: usize) -> bool {
        wall_blocked(scene, self.ue_pos, self.aps[k].pos)
    }

    fn blocked(&self, scene: &Scene, k: usize) -> bool {
        self.wall_blocked_at(scene, k) || self.human_blocked_at(scene, k)
    }

    /// Position in `aps` of the serving AP, if any.
    pub fn serving_in(&self, scene: &Scene) -> Option<usize> {
        (0..self.n_in_range).find(|&k| !self.blocked(scene, k))
    }

    pub fn outcome_in(&self, scene: &Scene) -> TrialOutcome {
        let Some(s) = self.serving_in(scene) else {
            return TrialOutcome {
                associated: None,
                sinr: 0.0,
                pointing_loss: scene.pointing_loss,
            };
        };
        // closer APs are blocked, so the interferers are the unblocked ones after s
        let interference: f64 = (s + 1..self.aps.len())
            .filter(|&k| !self.blocked(scene, k))
            .map(|k| self.aps[k].power)
            .sum();
        TrialOutcome {
            associated: Some(self.aps[s].idx),
            sinr: self.aps[s].zeta * scene.pointing_loss / (interference + self.model.params.n_0),
            pointing_loss: scene.pointing_loss,
        }
    }

    pub fn run_trial(&self, seed: u64, trial: u64) -> TrialOutcome {
        self.outcome_in(&self.realize_scene(seed, trial))
    }
}

/// Coverage frequency `Pr(SINR > beta)`.
pub fn estimate_coverage(setup: &SimSetup, beta: f64, n_trials: u64, seed: u64) -> Result<Estimate, SimError> {
    Ok(estimate_coverage_curve(setup, &[beta], n_trials, seed)?.remove(0))
}

/// Coverage at several thresholds from the same trials.
pub fn estimate_coverage_curve(setup: &SimSetup, betas: &[f64], n_trials: u64, seed: u64) -> Result<Vec<Estimate>, SimError> {
    check_trials(n_trials)?;
    let parts: Vec<Vec<u64>> = chunks(n_trials)
        .into_par_iter()
        .map(|range| {
            let mut scene = Scene::default();
            let mut hits = vec![0u64; betas.len()];
            for t in range {
                setup.realize_scene_into(seed, t, &mut scene);
                let o = setup.outcome_in(&scene);
                for (h, &b) in hits.iter_mut().zip(betas) {
                    if o.sinr > b {
                        *h += 1;
                    }
                }
            }
            hits
        })
        .collect();
    Ok((0..betas.len())
        .map(|k| Estimate::bernoulli(parts.iter().map(|p| p[k]).sum(), n_trials))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociationEstimate {
    pub per_ap: Vec<(ApIndex, Estimate)>,
    pub total: Estimate,
}

/// Empirical association frequencies of the APs within the coverage radius.
pub fn estimate_association(setup: &SimSetup, n_trials: u64, seed: u64) -> Result<AssociationEstimate, SimError> {
    check_trials(n_trials)?;
    let n = setup.n_in_range;
    let parts: Vec<Vec<u64>> = chunks(n_trials)
        .into_par_iter()
        .map(|range| {
            let mut scene = Scene::default();
            let mut counts = vec![0u64; n];
            for t in range {
                setup.realize_scene_into(seed, t, &mut scene);
                if let Some(s) = setup.serving_in(&scene) {
                    counts[s] += 1;
                }
            }
            counts
        })
        .collect();
    let counts: Vec<u64> = (0..n).map(|k| parts.iter().map(|p| p[k]).sum()).collect();
    Ok(AssociationEstimate {
        per_ap: (0..n).map(|k| (setup.aps[k].idx, Estimate::bernoulli(counts[k], n_trials))).collect(),
        total: Estimate::bernoulli(counts.iter().sum(), n_trials),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterferenceEstimate {
    pub mean: Estimate,
    pub variance: Estimate,
    pub n_attempted: u64,
}

/// Sample moments of the interference from every other AP no closer than
/// `serving`, over trials in which the serving link is wall-unblocked.
///
/// Trials are drawn in order until `n_accepted` are accepted.
pub fn estimate_interference_moments(
    setup: &SimSetup,
    serving: ApIndex,
    n_accepted: u64,
    seed: u64,
) -> Result<InterferenceEstimate, SimError> {
    check_trials(n_accepted)?;
    let s = setup.aps[..setup.n_in_range]
        .iter()
        .position(|a| a.idx == serving)
        .ok_or_else(|| {
            let lat = Lattice::new(setup.model.topology(), setup.model.params.d_ap).expect("grid");
            AnalysisError::OutsideCoverage {
                i: serving.i,
                j: serving.j,
                d: lat.link(setup.ue, serving).d,
                r_a: setup.model.params.r_a,
            }
        })?;
    let d_s = setup.aps[s].link.d;
    let sources: Vec<usize> = (0..setup.aps.len())
        .filter(|&k| k != s && cmp_distance(setup.aps[k].link.d, d_s).is_ge())
        .collect();
    let mut samples: Vec<f64> = Vec::with_capacity(n_accepted as usize);
    let mut next = 0u64;
    let batch = (CHUNK * 64).max(n_accepted / 4);
    while (samples.len() as u64) < n_accepted {
        let parts: Vec<Vec<f64>> = chunks(batch)
            .into_par_iter()
            .map(|r| {
                let mut scene = Scene::default();
                let mut out = Vec::new();
                for t in r.start + next..r.end + next {
                    setup.realize_scene_into(seed, t, &mut scene);
                    if setup.wall_blocked_at(&scene, s) {
                        continue;
                    }
                    out.push(sources.iter().filter(|&&k| !setup.blocked(&scene, k)).map(|&k| setup.aps[k].power).sum());
                }
                out
            })
            .collect();
        let before = samples.len();
        for p in parts {
            samples.extend(p);
        }
        next += batch;
        if samples.len() == before && next >= 64 * batch {
            return Err(SimError::NoAcceptedTrials {
                i: serving.i,
                j: serving.j,
                attempts: next,
            });
        }
    }
    // the attempts needed for exactly n_accepted acceptances are not tracked per trial;
    // report the attempts drawn
    samples.truncate(n_accepted as usize);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in &samples {
        let c = (x - mean) * (x - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= n;
    m4 /= n;
    let var = m2 * n / (n - 1.0);
    Ok(InterferenceEstimate {
        mean: Estimate {
            mean,
            half_width_95: 1.96 * (m2 / n).sqrt(),
            n_trials: n_accepted,
        },
        variance: Estimate {
            mean: var,
            half_width_95: 1.96 * ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            n_trials: n_accepted,
        },
        n_attempted: next,
    })
}

/// Coverage with APs redrawn each trial as a Poisson field of density
/// `lambda_a` around the UE.
pub fn ppp_baseline_coverage(
    model: &Model,
    lambda_a: f64,
    betas: &[f64],
    n_trials: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<Estimate>, SimError> {
    check_trials(n_trials)?;
    if !(lambda_a > 0.0 && lambda_a.is_finite()) {
        return Err(SimError::InvalidArgument(format!("AP density must be positive (got {lambda_a})")));
    }
    let p = &model.params;
    let c = &model.consts;
    // same tail bound as a square lattice of equal density
    let lat = Lattice::new(Topology::Square, (1.0 / lambda_a).sqrt())?;
    let radius = InterferenceBound::new(model, &lat).radius_for(p.r_a, opts.trunc_epsilon)?.radius;
    let aps_window = Window {
        x_min: -radius,
        x_max: radius,
        y_min: -radius,
        y_max: radius,
    };
    let window = Window::around([[-radius, -radius], [radius, radius]].into_iter(), p.r_b);
    let reach = zone_length(radius, model) + p.r_b;
    let human_window = Window::around([[0.0, 0.0]].into_iter(), reach);
    let ue = [0.0, 0.0];

    let parts: Vec<Vec<u64>> = chunks(n_trials)
        .into_par_iter()
        .map(|range| {
            let mut scene = Scene::default();
            let mut near: Vec<(f64, usize)> = Vec::new();
            let mut dist: Vec<f64> = Vec::new();
            let mut hits = vec![0u64; betas.len()];
            for t in range {
                poisson_field(&mut trial_rng(seed, t, Substream::Aps), lambda_a, &aps_window, &mut scene.ap_positions);
                scene.ap_positions.retain(|a| a[0].hypot(a[1]) <= radius);
                poisson_line(&mut trial_rng(seed, t, Substream::WallsX), p.lambda_w, window.x_min, window.x_max, &mut scene.walls_x);
                poisson_line(&mut trial_rng(seed, t, Substream::WallsY), p.lambda_w, window.y_min, window.y_max, &mut scene.walls_y);
                let mut hr = trial_rng(seed, t, Substream::Humans);
                scene.human_draws.clear();
                scene.humans.clear();
                match opts.human_model {
                    HumanModel::IndependentZones => scene.human_draws.extend((0..scene.ap_positions.len()).map(|_| hr.random::<f64>())),
                    HumanModel::SharedField => poisson_field(&mut hr, p.lambda_b, &human_window, &mut scene.humans),
                }
                scene.pointing_loss = sample_pointing_loss(&mut trial_rng(seed, t, Substream::Beam), opts.pointing, p.omega_t, p.n_a);

                dist.clear();
                dist.extend(scene.ap_positions.iter().map(|a| a[0].hypot(a[1])));
                let blocked = |k: usize| {
                    let a = scene.ap_positions[k];
                    wall_blocked(&scene, ue, a)
                        || match opts.human_model {
                            HumanModel::IndependentZones => scene.human_draws[k] >= (-c.alpha * dist[k]).exp(),
                            HumanModel::SharedField => human_blocked(&scene, ue, a, model),
                        }
                };
                near.clear();
                near.extend(dist.iter().enumerate().filter(|(_, &d)| d <= p.r_a).map(|(k, &d)| (d, k)));
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let Some(&(d_s, s)) = near.iter().find(|&&(_, k)| !blocked(k)) else {
                    continue;
                };
                let interference: f64 = (0..dist.len())
                    .filter(|&k| k != s && dist[k] >= d_s && !blocked(k))
                    .map(|k| interference_power(dist[k], model))
                    .sum();
                let zeta = p.p_t * c.xi * c.g_max * path_gain(d_s, c.delta_h, p.eps_f);
                let sinr = zeta * scene.pointing_loss / (interference + p.n_0);
                for (h, &b) in hits.iter_mut().zip(betas) {
                    if sinr > b {
                        *h += 1;
                    }
                }
            }
            hits
        })
        .collect();
    Ok((0..betas.len())
        .map(|k| Estimate::bernoulli(parts.iter().map(|p| p[k]).sum(), n_trials))
        .collect())
}

/// Independent pointing-loss draws, sample `k` from trial stream `k`.
pub fn sample_pointing_losses(model: &Model, pointing: PointingModel, n: u64, seed: u64) -> Vec<f64> {
    let p = &model.params;
    chunks(n)
        .into_par_iter()
        .map(|r| {
            r.map(|k| sample_pointing_loss(&mut trial_rng(seed, k, Substream::Beam), pointing, p.omega_t, p.n_a))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            let f = cdf(v);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Walls realized around a UE at the origin and APs at `-link` for each link.
fn link_walls(lambda_w: f64, seed: u64, trial: u64, scene: &mut Scene, w: &Window) {
    poisson_line(&mut trial_rng(seed, trial, Substream::WallsX), lambda_w, w.x_min, w.x_max, &mut scene.walls_x);
    poisson_line(&mut trial_rng(seed, trial, Substream::WallsY), lambda_w, w.y_min, w.y_max, &mut scene.walls_y);
}

fn link_window(links: &[LinkGeometry]) -> Window {
    Window::around(links.iter().map(|l| [-l.x, -l.y]).chain([[0.0, 0.0]]), 1.0)
}

/// Frequency with which every link is wall-unblocked.
pub fn joint_wall_unblocked_mc(links: &[LinkGeometry], lambda_w: f64, n: u64, seed: u64) -> Estimate {
    let w = link_window(links);
    let hits: u64 = chunks(n)
        .into_par_iter()
        .map(|r| {
            let mut scene = Scene::default();
            let mut hits = 0u64;
            for t in r {
                link_walls(lambda_w, seed, t, &mut scene, &w);
                if links.iter().all(|l| !wall_blocked(&scene, [0.0, 0.0], [-l.x, -l.y])) {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Estimate::bernoulli(hits, n)
}

/// Sample covariance of the wall-unblocked indicators of two links.
pub fn wall_covariance_mc(a: &LinkGeometry, b: &LinkGeometry, lambda_w: f64, n: u64, seed: u64) -> Estimate {
    let links = [*a, *b];
    let w = link_window(&links);
    // counts of (a clear, b clear) in [00, 01, 10, 11]
    let cells = chunks(n)
        .into_par_iter()
        .map(|r| {
            let mut scene = Scene::default();
            let mut cells = [0u64; 4];
            for t in r {
                link_walls(lambda_w, seed, t, &mut scene, &w);
                let ca = !wall_blocked(&scene, [0.0, 0.0], [-a.x, -a.y]) as usize;
                let cb = !wall_blocked(&scene, [0.0, 0.0], [-b.x, -b.y]) as usize;
                cells[2 * ca + cb] += 1;
            }
            cells
        })
        .collect::<Vec<_>>()
        .iter()
        .fold([0u64; 4], |mut acc, c| {
            for k in 0..4 {
                acc[k] += c[k];
            }
            acc
        });
    let nf = n as f64;
    let f: Vec<f64> = cells.iter().map(|&c| c as f64 / nf).collect();
    let (pa, pb) = (f[2] + f[3], f[1] + f[3]);
    let cov = f[3] - pa * pb;
    // variance of (X - pa)(Y - pb) over the four cells
    let z = |x: f64, y: f64| (x - pa) * (y - pb);
    let vals = [z(0.0, 0.0), z(0.0, 1.0), z(1.0, 0.0), z(1.0, 1.0)];
    let var: f64 = (0..4).map(|k| f[k] * (vals[k] - cov).powi(2)).sum();
    Estimate {
        mean: cov,
        half_width_95: 1.96 * (var / nf).sqrt(),
        n_trials: n,
    }
}
