//! Closed-form engine: interference moments, association probabilities,
//! coverage probability and its average over UE positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::PointingErrorDist;
use crate::blockage::{
    conditional_wall_covariance, conditional_wall_unblocked, human_unblocked, wall_unblocked,
    ProjectionExtents,
};
use crate::channel::{interference_power, LinkBudget};
use crate::geometry::{
    cmp_distance, fundamental_region, fundamental_region_quadrature, representative_location,
    ApIndex, GeometryError, Lattice, LinkGeometry, UeLocation,
};
use crate::params::{Model, Topology};

/// Default truncation tolerance on the neglected interference, W.
pub const DEFAULT_TRUNC_EPSILON: f64 = 1e-24;

/// Default largest closer set expanded by inclusion-exclusion.
pub const DEFAULT_IE_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("AP ({i}, {j}) is {d} m from the UE, outside the coverage radius R_A = {r_a} m")]
    OutsideCoverage { i: i64, j: i64, d: f64, r_a: f64 },
    #[error(
        "combinatorial blowup: AP ({i}, {j}) has {size} closer APs, above the \
         inclusion-exclusion cap of {cap}"
    )]
    CombinatorialBlowup { i: i64, j: i64, size: usize, cap: usize },
    #[error("interference sum does not converge: alpha + lambda_W + eps_f must be positive")]
    NonConvergent,
    #[error("{0}")]
    InvalidArgument(String),
}

/// How `Pr(A_ij)` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMethod {
    /// Signed sum over all subsets of the closer set; fails above the cap.
    InclusionExclusion,
    /// Integrates over the distance to the first wall on each half-axis.
    WallState,
    /// Inclusion-exclusion up to the cap, wall-state integration above it.
    #[default]
    Auto,
}

impl AssociationMethod {
    pub fn name(self) -> &'static str {
        match self {
            AssociationMethod::InclusionExclusion => "inclusion_exclusion",
            AssociationMethod::WallState => "wall_state",
            AssociationMethod::Auto => "auto",
        }
    }
}

impl std::str::FromStr for AssociationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inclusion_exclusion" => Ok(AssociationMethod::InclusionExclusion),
            "wall_state" => Ok(AssociationMethod::WallState),
            "auto" => Ok(AssociationMethod::Auto),
            other => Err(format!(
                "unknown association method '{other}' (expected inclusion_exclusion, wall_state or auto)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Bound on the interference from APs beyond the truncation radius, W.
    pub trunc_epsilon: f64,
    pub association: AssociationMethod,
    pub ie_cap: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            trunc_epsilon: DEFAULT_TRUNC_EPSILON,
            association: AssociationMethod::Auto,
            ie_cap: DEFAULT_IE_CAP,
        }
    }
}

fn lattice(model: &Model) -> Result<Lattice, AnalysisError> {
    Ok(Lattice::new(model.topology(), model.params.d_ap)?)
}

// ---------------------------------------------------------------------------
// Truncation

/// Lattice truncation radius and the bound on what it leaves out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Truncation {
    pub radius: f64,
    pub tail_bound: f64,
}

/// Shell-by-shell bound on a lattice sum of `amplitude * exp(-kappa r) / (r^2 + dh^2)`.
///
/// Shell `k` holds the lattice points at distance `[k d, (k+1) d)`; each
/// point's cell lies within `D` of it, which bounds the shell's count by an
/// annulus area over the cell area.
#[derive(Clone, Copy, Debug)]
pub struct ShellBound {
    pub spacing: f64,
    pub cell_diameter: f64,
    pub cell_area: f64,
    pub amplitude: f64,
    pub kappa: f64,
    pub delta_h: f64,
}

impl ShellBound {
    pub fn for_lattice(lat: &Lattice, amplitude: f64, kappa: f64, delta_h: f64) -> Self {
        ShellBound {
            spacing: lat.d_ap,
            cell_diameter: lat.cell_diameter(),
            cell_area: lat.cell_area(),
            amplitude,
            kappa,
            delta_h,
        }
    }

    fn count(&self, k: f64) -> f64 {
        let (d, dd) = (self.spacing, self.cell_diameter);
        let outer = (k + 1.0) * d + dd;
        let inner = (k * d - dd).max(0.0);
        std::f64::consts::PI * (outer * outer - inner * inner) / self.cell_area
    }

    fn term(&self, k: u64) -> f64 {
        let kf = k as f64;
        let r = kf * self.spacing;
        self.amplitude * self.count(kf) * (-self.kappa * r).exp() / (r * r + self.delta_h * self.delta_h)
    }

    /// Upper bound on the ratio of consecutive terms from shell `k` on.
    fn ratio(&self, k: u64) -> Option<f64> {
        let kf = k as f64;
        if kf * self.spacing <= self.cell_diameter {
            return None;
        }
        let r = (-self.kappa * self.spacing).exp() * (2.0 * kf + 3.0) / (2.0 * kf + 1.0);
        (r < 1.0).then_some(r)
    }

    /// Bound on the sum over shells `k >= first`.
    pub fn tail_from(&self, first: u64) -> Result<f64, AnalysisError> {
        if self.amplitude == 0.0 {
            return Ok(0.0);
        }
        if !(self.kappa > 0.0) {
            return Err(AnalysisError::NonConvergent);
        }
        let mut sum = 0.0;
        let mut k = first;
        loop {
            let t = self.term(k);
            sum += t;
            if let Some(r) = self.ratio(k) {
                let rest = t * r / (1.0 - r);
                if rest <= 1e-9 * sum || sum == 0.0 {
                    return Ok(sum + rest);
                }
            }
            k += 1;
            if k - first > 50_000_000 {
                return Err(AnalysisError::NonConvergent);
            }
        }
    }

    /// Smallest radius `K d >= r_min` whose tail bound is below `epsilon`.
    pub fn radius_for(&self, r_min: f64, epsilon: f64) -> Result<Truncation, AnalysisError> {
        let d = self.spacing;
        let k0 = ((r_min / d) - 1e-9).ceil().max(1.0) as u64;
        if self.amplitude == 0.0 {
            return Ok(Truncation {
                radius: k0 as f64 * d,
                tail_bound: 0.0,
            });
        }
        if !(self.kappa > 0.0) {
            return Err(AnalysisError::NonConvergent);
        }
        if !(epsilon > 0.0) {
            return Err(AnalysisError::InvalidArgument(format!(
                "truncation epsilon must be positive (got {epsilon})"
            )));
        }
        // terms from k0 until the remainder is far below epsilon, then suffix sums
        let mut terms = Vec::new();
        let mut k = k0;
        let rest = loop {
            let t = self.term(k);
            terms.push(t);
            if let Some(r) = self.ratio(k) {
                let rest = t * r / (1.0 - r);
                if t / (1.0 - r) < 1e-3 * epsilon {
                    break rest;
                }
            }
            k += 1;
            if k - k0 > 50_000_000 {
                return Err(AnalysisError::NonConvergent);
            }
        };
        let mut tail = rest;
        let mut best = (k + 1, rest);
        for (off, t) in terms.iter().enumerate().rev() {
            tail += t;
            if tail < epsilon {
                best = (k0 + off as u64, tail);
            } else {
                break;
            }
        }
        Ok(Truncation {
            radius: best.0 as f64 * d,
            tail_bound: best.1,
        })
    }
}

/// Bound on the conditional interference from APs beyond a radius.
///
/// Each interferer contributes at most `P_t G_S xi W(d) e^{-alpha d}` times
/// its conditional wall-unblocked probability, which is at most one and at
/// most `e^{lambda_W (sqrt 2 R_A - d)}`. Both give a valid shell bound and the
/// tighter one is used.
#[derive(Clone, Debug)]
pub struct InterferenceBound {
    candidates: Vec<ShellBound>,
}

impl InterferenceBound {
    pub fn new(model: &Model, lat: &Lattice) -> Self {
        let p = &model.params;
        let c = &model.consts;
        let base = p.p_t * c.g_s * c.xi;
        let headroom = (p.lambda_w * std::f64::consts::SQRT_2 * p.r_a).exp();
        let mut candidates = vec![ShellBound::for_lattice(lat, base, c.alpha + p.eps_f, c.delta_h)];
        if p.lambda_w > 0.0 && (base * headroom).is_finite() {
            candidates.push(ShellBound::for_lattice(lat, base * headroom, c.alpha + p.lambda_w + p.eps_f, c.delta_h));
        }
        InterferenceBound { candidates }
    }

    pub fn radius_for(&self, r_min: f64, epsilon: f64) -> Result<Truncation, AnalysisError> {
        self.pick(|b| b.radius_for(r_min, epsilon), |a, b| a.radius.total_cmp(&b.radius))
    }

    pub fn tail_from(&self, first: u64) -> Result<f64, AnalysisError> {
        self.pick(|b| b.tail_from(first), f64::total_cmp)
    }

    fn pick<T>(
        &self,
        f: impl Fn(&ShellBound) -> Result<T, AnalysisError>,
        cmp: impl Fn(&T, &T) -> std::cmp::Ordering,
    ) -> Result<T, AnalysisError> {
        let mut best: Option<T> = None;
        let mut err = AnalysisError::NonConvergent;
        for b in &self.candidates {
            match f(b) {
                Ok(v) => {
                    if best.as_ref().is_none_or(|x| cmp(&v, x).is_lt()) {
                        best = Some(v);
                    }
                }
                Err(e @ AnalysisError::InvalidArgument(_)) => return Err(e),
                Err(e) => err = e,
            }
        }
        best.ok_or(err)
    }
}

/// Radius beyond which the conditional mean interference is below `epsilon` W.
pub fn truncation_radius(model: &Model, epsilon: f64) -> Result<Truncation, AnalysisError> {
    let lat = lattice(model)?;
    InterferenceBound::new(model, &lat).radius_for(model.params.r_a, epsilon)
}

// ---------------------------------------------------------------------------
// Interference moments

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterferenceStats {
    pub mu: f64,
    pub sigma2: f64,
    pub truncation_radius: f64,
    pub truncation_tail_bound: f64,
}

/// One potential interferer: link, unblocked power and human-unblocked probability.
#[derive(Clone, Copy, Debug)]
struct Source {
    link: LinkGeometry,
    power: f64,
    p_h: f64,
}

/// Side index of a signed offset: 0 for none, 1 positive, 2 negative.
fn side(v: f64) -> usize {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        2
    } else {
        0
    }
}

/// Distinct projection lengths per side, ascending, and each input's class.
struct AxisClasses {
    lengths: [Vec<f64>; 3],
    class_of: Vec<(usize, usize)>,
}

impl AxisClasses {
    fn build(offsets: &[f64]) -> Self {
        let mut lengths: [Vec<f64>; 3] = [vec![0.0], Vec::new(), Vec::new()];
        let mut order: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (k, &v) in offsets.iter().enumerate() {
            order[side(v)].push(k);
        }
        let mut class_of = vec![(0usize, 0usize); offsets.len()];
        for s in 1..3 {
            order[s].sort_by(|&a, &b| offsets[a].abs().total_cmp(&offsets[b].abs()));
            for &k in &order[s] {
                let len = offsets[k].abs();
                let fresh = match lengths[s].last() {
                    Some(&last) => len - last > 1e-9 * len.max(1.0),
                    None => true,
                };
                if fresh {
                    lengths[s].push(len);
                }
                class_of[k] = (s, lengths[s].len() - 1);
            }
        }
        AxisClasses { lengths, class_of }
    }

    /// Conditional factor per class: walls beyond the serving link's reach on that side.
    fn factors(&self, serving: f64, lambda_w: f64) -> [Vec<f64>; 3] {
        let reach = |s: usize| if s != 0 && side(serving) == s { serving.abs() } else { 0.0 };
        let mut out: [Vec<f64>; 3] = [vec![1.0], Vec::new(), Vec::new()];
        for (s, o) in out.iter_mut().enumerate().skip(1) {
            let r = reach(s);
            *o = self.lengths[s]
                .iter()
                .map(|&l| (-lambda_w * (l - r).max(0.0)).exp())
                .collect();
        }
        out
    }
}

/// Conditional mean and variance of `sum_k power_k * 1{k unblocked}` given
/// the serving link is wall-unblocked.
///
/// Pairwise joint wall probabilities factor over the axes; on each axis two
/// links on the same side of the UE share the shorter link's clearance, so
/// the joint factor is the smaller of the two conditional factors, and the
/// product otherwise. Grouping links by side and projection length turns
/// the double sum into prefix sums over the distinct lengths.
fn conditional_moments(serving: &LinkGeometry, sources: &[Source], lambda_w: f64) -> (f64, f64) {
    if sources.is_empty() {
        return (0.0, 0.0);
    }
    let xs: Vec<f64> = sources.iter().map(|s| s.link.x).collect();
    let ys: Vec<f64> = sources.iter().map(|s| s.link.y).collect();
    let cx = AxisClasses::build(&xs);
    let cy = AxisClasses::build(&ys);
    let ex = cx.factors(serving.x, lambda_w);
    let ey = cy.factors(serving.y, lambda_w);

    // quadrant mass matrices B[sx][sy][cx * ny + cy] of b_k = power_k * p_h,k
    let mut mass: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|sx| (0..3).map(|sy| vec![0.0; ex[sx].len() * ey[sy].len()]).collect())
        .collect();
    let (mut mu, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (k, src) in sources.iter().enumerate() {
        let (sx, ix) = cx.class_of[k];
        let (sy, iy) = cy.class_of[k];
        let p = ex[sx][ix] * ey[sy][iy];
        let b = src.power * src.p_h;
        mu += b * p;
        s1 += src.power * src.power * src.p_h * p;
        s2 += b * b * p;
        mass[sx][sy][ix * ey[sy].len() + iy] += b;
    }

    // per-quadrant summaries
    let mut prod = [[0.0f64; 3]; 3];
    let mut row_w: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 3]; 3]; // sum over cy of B * Ey, per cx
    let mut col_w: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 3]; 3]; // sum over cx of B * Ex, per cy
    for sx in 0..3 {
        for sy in 0..3 {
            let (nx, ny) = (ex[sx].len(), ey[sy].len());
            let m = &mass[sx][sy];
            let mut rw = vec![0.0; nx];
            let mut cw = vec![0.0; ny];
            let mut total = 0.0;
            for a in 0..nx {
                for b in 0..ny {
                    let v = m[a * ny + b];
                    if v != 0.0 {
                        rw[a] += v * ey[sy][b];
                        cw[b] += v * ex[sx][a];
                        total += v * ex[sx][a] * ey[sy][b];
                    }
                }
            }
            prod[sx][sy] = total;
            row_w[sx][sy] = rw;
            col_w[sx][sy] = cw;
        }
    }

    let mut t = 0.0;
    for sx in 0..3 {
        for sy in 0..3 {
            for tx in 0..3 {
                for ty in 0..3 {
                    let x_same = sx == tx && sx != 0;
                    let y_same = sy == ty && sy != 0;
                    t += match (x_same, y_same) {
                        (false, false) => prod[sx][sy] * prod[tx][ty],
                        (true, false) => min_pair_sum(&row_w[sx][sy], &row_w[tx][ty], &ex[sx]),
                        (false, true) => min_pair_sum(&col_w[sx][sy], &col_w[tx][ty], &ey[sy]),
                        (true, true) => min_min_sum(&mass[sx][sy], &ex[sx], &ey[sy]),
                    };
                }
            }
        }
    }
    let sigma2 = (s1 + t - s2 - mu * mu).max(0.0);
    (mu, sigma2)
}

/// `sum_{c, c'} u[c] v[c'] e[max(c, c')]` for non-increasing `e`.
fn min_pair_sum(u: &[f64], v: &[f64], e: &[f64]) -> f64 {
    let (mut pu, mut pv, mut s) = (0.0, 0.0, 0.0);
    for x in 0..e.len() {
        // pairs whose larger index is exactly x
        let n = u[x] * (pv + v[x]) + pu * v[x];
        s += e[x] * n;
        pu += u[x];
        pv += v[x];
    }
    s
}

/// `sum_{k, l} B_k B_l ex[max(cx)] ey[max(cy)]` over one quadrant's mass matrix.
fn min_min_sum(m: &[f64], ex: &[f64], ey: &[f64]) -> f64 {
    let (nx, ny) = (ex.len(), ey.len());
    // prefix[X][Y] = sum_{a<=X, b<=Y} m
    let mut prefix = vec![0.0; nx * ny];
    let mut s = 0.0;
    for x in 0..nx {
        let mut col = 0.0; // sum_{b<=Y} m[x][b]
        for y in 0..ny {
            let b = m[x * ny + y];
            let up = if x > 0 { prefix[(x - 1) * ny + y] } else { 0.0 };
            let up_left = if x > 0 && y > 0 { prefix[(x - 1) * ny + y - 1] } else { 0.0 };
            let left = if y > 0 { prefix[x * ny + y - 1] } else { 0.0 };
            // row partials at Y: r_x = sum_{a<=x} m[a][y], r_prev = sum_{a<x} m[a][y]
            let r_prev = up - up_left;
            let r_x = r_prev + b;
            let n = col * (r_x + r_prev) + b * (left + up_left + r_x + r_prev);
            s += ex[x] * ey[y] * n;
            col += b;
            prefix[x * ny + y] = left + r_x;
        }
    }
    s
}

fn sources_for(model: &Model, list: &[(ApIndex, LinkGeometry)], serving_pos: usize) -> Vec<Source> {
    let d_s = list[serving_pos].1.d;
    let alpha = model.consts.alpha;
    list.iter()
        .enumerate()
        .filter(|&(k, (_, l))| k != serving_pos && cmp_distance(l.d, d_s).is_ge())
        .map(|(_, (_, l))| Source {
            link: *l,
            power: interference_power(l.d, model),
            p_h: human_unblocked(l.d, alpha),
        })
        .collect()
}

fn serving_position(
    model: &Model,
    list: &[(ApIndex, LinkGeometry)],
    serving: ApIndex,
    lat: &Lattice,
    ue: UeLocation,
) -> Result<usize, AnalysisError> {
    let r_a = model.params.r_a;
    let link = lat.link(ue, serving);
    match list.iter().position(|(k, _)| *k == serving) {
        Some(p) if link.d <= r_a * (1.0 + 1e-12) => Ok(p),
        _ => Err(AnalysisError::OutsideCoverage {
            i: serving.i,
            j: serving.j,
            d: link.d,
            r_a,
        }),
    }
}

/// Conditional interference moments with the lattice truncated so that the
/// neglected tail is below `opts.trunc_epsilon`.
pub fn interference_moments(
    model: &Model,
    ue: UeLocation,
    serving: ApIndex,
    opts: &AnalysisOptions,
) -> Result<InterferenceStats, AnalysisError> {
    let trunc = truncation_radius(model, opts.trunc_epsilon)?;
    interference_with(model, ue, serving, trunc)
}

/// Conditional interference moments over the APs within `radius` m.
pub fn interference_moments_at_radius(
    model: &Model,
    ue: UeLocation,
    serving: ApIndex,
    radius: f64,
) -> Result<InterferenceStats, AnalysisError> {
    let lat = lattice(model)?;
    let shells = InterferenceBound::new(model, &lat);
    let k = (radius / lat.d_ap + 1e-9).floor() as u64;
    let tail_bound = shells.tail_from(k)?;
    interference_with(model, ue, serving, Truncation { radius, tail_bound })
}

fn interference_with(
    model: &Model,
    ue: UeLocation,
    serving: ApIndex,
    trunc: Truncation,
) -> Result<InterferenceStats, AnalysisError> {
    let lat = lattice(model)?;
    let list = lat.aps_within(ue, trunc.radius.max(model.params.r_a));
    let pos = serving_position(model, &list, serving, &lat, ue)?;
    let sources = sources_for(model, &list, pos);
    let (mu, sigma2) = conditional_moments(&list[pos].1, &sources, model.params.lambda_w);
    Ok(InterferenceStats {
        mu,
        sigma2,
        truncation_radius: trunc.radius,
        truncation_tail_bound: trunc.tail_bound,
    })
}

/// Reference evaluation of the conditional moments as a literal double sum
/// over interferer pairs. Quadratic in the number of APs.
pub fn interference_moments_pairwise(
    model: &Model,
    ue: UeLocation,
    serving: ApIndex,
    radius: f64,
) -> Result<InterferenceStats, AnalysisError> {
    let lat = lattice(model)?;
    let list = lat.aps_within(ue, radius.max(model.params.r_a));
    let pos = serving_position(model, &list, serving, &lat, ue)?;
    let g = list[pos].1;
    let lw = model.params.lambda_w;
    let sources = sources_for(model, &list, pos);
    let q: Vec<f64> = sources.iter().map(|s| s.p_h * conditional_wall_unblocked(&s.link, &g, lw)).collect();
    let mut mu = 0.0;
    let mut var = 0.0;
    for (k, s) in sources.iter().enumerate() {
        mu += s.power * q[k];
        var += q[k] * (1.0 - q[k]) * s.power * s.power;
    }
    for (k, a) in sources.iter().enumerate() {
        for (l, b) in sources.iter().enumerate() {
            if k != l {
                let c = conditional_wall_covariance(&a.link, &b.link, &g, lw);
                var += c * a.p_h * b.p_h * a.power * b.power;
            }
        }
    }
    Ok(InterferenceStats {
        mu,
        sigma2: var,
        truncation_radius: radius,
        truncation_tail_bound: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// Association

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociationTable {
    pub entries: Vec<(ApIndex, f64)>,
    pub total: f64,
}

/// Inclusion-exclusion over the subsets of the closer set.
fn assoc_inclusion_exclusion(serving: &LinkGeometry, closer: &[(LinkGeometry, f64)], lambda_w: f64) -> f64 {
    fn walk(start: usize, ext: ProjectionExtents, coef: f64, closer: &[(LinkGeometry, f64)], lw: f64) -> f64 {
        let mut acc = coef * ext.wall_unblocked(lw);
        for m in start..closer.len() {
            let (link, p_h) = closer[m];
            acc += walk(m + 1, ext.with(&link), -coef * p_h, closer, lw);
        }
        acc
    }
    walk(0, ProjectionExtents::of(serving), 1.0, closer, lambda_w)
}

/// Where a link's projection sits on the four half-axes.
#[derive(Clone, Copy)]
struct Reach {
    /// (half-axis, 1-based rank of its length among that half-axis's breakpoints)
    x: Option<(usize, usize)>,
    y: Option<(usize, usize)>,
}

/// Exact association probability by conditioning on the wall state.
///
/// A link is wall-clear iff the first wall on each half-axis it spans lies
/// beyond its projection. The four first-wall distances are independent
/// exponentials, and the association event only depends on which interval
/// between consecutive projection lengths each one falls in.
fn assoc_wall_state(serving: &LinkGeometry, closer: &[(LinkGeometry, f64)], lambda_w: f64) -> f64 {
    let links: Vec<LinkGeometry> = std::iter::once(*serving).chain(closer.iter().map(|c| c.0)).collect();
    // half-axes: 0 = x+, 1 = x-, 2 = y+, 3 = y-
    let mut breaks: [Vec<f64>; 4] = Default::default();
    let half = |v: f64, base: usize| -> Option<(usize, f64)> {
        match side(v) {
            1 => Some((base, v)),
            2 => Some((base + 1, -v)),
            _ => None,
        }
    };
    for l in &links {
        for (h, len) in [half(l.x, 0), half(l.y, 2)].into_iter().flatten() {
            breaks[h].push(len);
        }
    }
    for b in breaks.iter_mut() {
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    let rank = |h: usize, len: f64| -> usize {
        breaks[h].iter().position(|&b| (b - len).abs() <= 1e-12 * b.abs().max(1.0)).unwrap() + 1
    };
    let reaches: Vec<Reach> = links
        .iter()
        .map(|l| Reach {
            x: half(l.x, 0).map(|(h, len)| (h, rank(h, len))),
            y: half(l.y, 2).map(|(h, len)| (h, rank(h, len))),
        })
        .collect();
    // probability that the first wall on half-axis h falls in cell c (c walls' worth of breakpoints cleared)
    let cell_probs: Vec<Vec<f64>> = breaks
        .iter()
        .map(|b| {
            let mut probs = Vec::with_capacity(b.len() + 1);
            let mut prev = 1.0;
            for &x in b {
                let e = (-lambda_w * x).exp();
                probs.push(prev - e);
                prev = e;
            }
            probs.push(prev);
            probs
        })
        .collect();
    let clear = |r: &Reach, cells: &[usize; 4]| {
        r.x.is_none_or(|(h, k)| cells[h] >= k) && r.y.is_none_or(|(h, k)| cells[h] >= k)
    };
    // the serving link must be clear: start each of its half-axes at its rank
    let mut lo = [0usize; 4];
    for (h, k) in [reaches[0].x, reaches[0].y].into_iter().flatten() {
        lo[h] = k;
    }
    let mut total = 0.0;
    let mut cells = lo;
    loop {
        let pr: f64 = (0..4).map(|h| cell_probs[h][cells[h]]).product();
        if pr > 0.0 {
            let mut v = 1.0;
            for (r, (_, p_h)) in reaches[1..].iter().zip(closer) {
                if clear(r, &cells) {
                    v *= 1.0 - p_h;
                }
            }
            total += pr * v;
        }
        // odometer over the four half-axes
        let mut h = 0;
        loop {
            if h == 4 {
                return total;
            }
            cells[h] += 1;
            if cells[h] <= breaks[h].len() {
                break;
            }
            cells[h] = lo[h];
            h += 1;
        }
    }
}

fn association_from_list(
    model: &Model,
    list: &[(ApIndex, LinkGeometry)],
    pos: usize,
    opts: &AnalysisOptions,
) -> Result<f64, AnalysisError> {
    let alpha = model.consts.alpha;
    let lw = model.params.lambda_w;
    let (idx, serving) = list[pos];
    let closer: Vec<(LinkGeometry, f64)> = list[..pos].iter().map(|(_, l)| (*l, human_unblocked(l.d, alpha))).collect();
    let use_ie = match opts.association {
        AssociationMethod::InclusionExclusion => {
            if closer.len() > opts.ie_cap {
                return Err(AnalysisError::CombinatorialBlowup {
                    i: idx.i,
                    j: idx.j,
                    size: closer.len(),
                    cap: opts.ie_cap,
                });
            }
            true
        }
        AssociationMethod::WallState => false,
        AssociationMethod::Auto => closer.len() <= opts.ie_cap,
    };
    let walls = if use_ie {
        assoc_inclusion_exclusion(&serving, &closer, lw)
    } else {
        assoc_wall_state(&serving, &closer, lw)
    };
    Ok((human_unblocked(serving.d, alpha) * walls).clamp(0.0, 1.0))
}

fn independent_from_list(model: &Model, list: &[(ApIndex, LinkGeometry)], pos: usize) -> f64 {
    let alpha = model.consts.alpha;
    let lw = model.params.lambda_w;
    let p = |l: &LinkGeometry| human_unblocked(l.d, alpha) * wall_unblocked(l.d_x(), l.d_y(), lw);
    list[..pos].iter().fold(p(&list[pos].1), |acc, (_, l)| acc * (1.0 - p(l)))
}

fn coverage_list(model: &Model, ue: UeLocation) -> Result<(Lattice, Vec<(ApIndex, LinkGeometry)>), AnalysisError> {
    let lat = lattice(model)?;
    let list = lat.aps_within(ue, model.params.r_a);
    Ok((lat, list))
}

/// Probability that the UE associates with `idx`, accounting for wall correlation.
pub fn association_prob(
    model: &Model,
    ue: UeLocation,
    idx: ApIndex,
    opts: &AnalysisOptions,
) -> Result<f64, AnalysisError> {
    let (lat, list) = coverage_list(model, ue)?;
    let pos = serving_position(model, &list, idx, &lat, ue)?;
    association_from_list(model, &list, pos, opts)
}

/// Association probability under the independent-wall-blockage assumption.
pub fn association_prob_independent(model: &Model, ue: UeLocation, idx: ApIndex) -> Result<f64, AnalysisError> {
    let (lat, list) = coverage_list(model, ue)?;
    let pos = serving_position(model, &list, idx, &lat, ue)?;
    Ok(independent_from_list(model, &list, pos))
}

pub fn association_table(model: &Model, ue: UeLocation, opts: &AnalysisOptions) -> Result<AssociationTable, AnalysisError> {
    let (_, list) = coverage_list(model, ue)?;
    let entries = (0..list.len())
        .map(|pos| Ok((list[pos].0, association_from_list(model, &list, pos, opts)?)))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let total = entries.iter().map(|e| e.1).fold(0.0, |a, b| a + b);
    Ok(AssociationTable { entries, total })
}

pub fn association_table_independent(model: &Model, ue: UeLocation) -> Result<AssociationTable, AnalysisError> {
    let (_, list) = coverage_list(model, ue)?;
    let entries: Vec<_> = (0..list.len()).map(|pos| (list[pos].0, independent_from_list(model, &list, pos))).collect();
    let total = entries.iter().map(|e| e.1).fold(0.0, |a, b| a + b);
    Ok(AssociationTable { entries, total })
}

// ---------------------------------------------------------------------------
// Coverage

/// Per-serving-AP coverage term with its pre-clamp value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoverageTerm {
    pub idx: ApIndex,
    pub assoc: f64,
    pub conditional: f64,
    pub unclamped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageResult {
    pub p_c: f64,
    pub per_ap_terms: Vec<CoverageTerm>,
}

/// `1 - F(x) - beta^2 sigma^2 / (2 zeta^2) f'(x)` at `x = (mu + N0) beta / zeta`,
/// before clamping.
pub fn conditional_coverage_unclamped(
    stats: &InterferenceStats,
    zeta: f64,
    noise: f64,
    beta: f64,
    dist: &PointingErrorDist,
) -> f64 {
    let x = (stats.mu + noise) * beta / zeta;
    1.0 - dist.cdf(x) - beta * beta * stats.sigma2 / (2.0 * zeta * zeta) * dist.pdf_derivative(x)
}

pub fn conditional_coverage_value(
    stats: &InterferenceStats,
    zeta: f64,
    noise: f64,
    beta: f64,
    dist: &PointingErrorDist,
) -> f64 {
    let raw = conditional_coverage_unclamped(stats, zeta, noise, beta, dist);
    // adding zero turns a negative zero into a positive one
    let v = raw.clamp(0.0, 1.0) + 0.0;
    if v != raw {
        log::debug!("conditional coverage {raw} clamped to {v} (beta = {beta})");
    }
    v
}

/// Everything about one UE position that does not depend on the threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ServingTerm {
    pub idx: ApIndex,
    pub link: LinkGeometry,
    pub assoc: f64,
    pub assoc_independent: f64,
    pub interference: InterferenceStats,
    pub zeta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocationAnalysis {
    pub topology: Topology,
    pub ue: UeLocation,
    pub terms: Vec<ServingTerm>,
    pub dist: PointingErrorDist,
    pub noise: f64,
    pub truncation: Truncation,
}

impl LocationAnalysis {
    pub fn new(model: &Model, ue: UeLocation, opts: &AnalysisOptions) -> Result<Self, AnalysisError> {
        let lat = lattice(model)?;
        let trunc = InterferenceBound::new(model, &lat).radius_for(model.params.r_a, opts.trunc_epsilon)?;
        let list = lat.aps_within(ue, trunc.radius.max(model.params.r_a));
        let r_a = model.params.r_a * (1.0 + 1e-12);
        let n_serving = list.iter().take_while(|(_, l)| l.d <= r_a).count();
        let mut terms = Vec::with_capacity(n_serving);
        for pos in 0..n_serving {
            let (idx, link) = list[pos];
            let sources = sources_for(model, &list, pos);
            let (mu, sigma2) = conditional_moments(&link, &sources, model.params.lambda_w);
            terms.push(ServingTerm {
                idx,
                link,
                assoc: association_from_list(model, &list, pos, opts)?,
                assoc_independent: independent_from_list(model, &list, pos),
                interference: InterferenceStats {
                    mu,
                    sigma2,
                    truncation_radius: trunc.radius,
                    truncation_tail_bound: trunc.tail_bound,
                },
                zeta: LinkBudget::new(model, link.d).zeta,
            });
        }
        Ok(LocationAnalysis {
            topology: model.topology(),
            ue,
            terms,
            dist: PointingErrorDist::from_params(&model.params),
            noise: model.params.n_0,
            truncation: trunc,
        })
    }

    pub fn association_total(&self) -> f64 {
        self.terms.iter().map(|t| t.assoc).fold(0.0, |a, b| a + b)
    }

    pub fn association_total_independent(&self) -> f64 {
        self.terms.iter().map(|t| t.assoc_independent).fold(0.0, |a, b| a + b)
    }

    pub fn association_table(&self) -> AssociationTable {
        AssociationTable {
            entries: self.terms.iter().map(|t| (t.idx, t.assoc)).collect(),
            total: self.association_total(),
        }
    }

    pub fn coverage(&self, beta: f64) -> CoverageResult {
        let per_ap_terms: Vec<CoverageTerm> = self
            .terms
            .iter()
            .map(|t| {
                let unclamped = conditional_coverage_unclamped(&t.interference, t.zeta, self.noise, beta, &self.dist);
                CoverageTerm {
                    idx: t.idx,
                    assoc: t.assoc,
                    conditional: conditional_coverage_value(&t.interference, t.zeta, self.noise, beta, &self.dist),
                    unclamped,
                }
            })
            .collect();
        let p_c = per_ap_terms.iter().map(|t| t.assoc * t.conditional).fold(0.0, |a, b| a + b);
        CoverageResult { p_c, per_ap_terms }
    }

    /// Coverage with every pointing loss equal to 1.
    pub fn coverage_perfect_alignment(&self, beta: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| (t.interference.mu + self.noise) * beta / t.zeta < 1.0)
            .map(|t| t.assoc)
            .fold(0.0, |a, b| a + b)
    }
}

pub fn conditional_coverage(
    model: &Model,
    ue: UeLocation,
    serving: ApIndex,
    beta: f64,
    opts: &AnalysisOptions,
) -> Result<f64, AnalysisError> {
    check_beta(beta)?;
    let stats = interference_moments(model, ue, serving, opts)?;
    let lat = lattice(model)?;
    let zeta = LinkBudget::new(model, lat.link(ue, serving).d).zeta;
    let dist = PointingErrorDist::from_params(&model.params);
    Ok(conditional_coverage_value(&stats, zeta, model.params.n_0, beta, &dist))
}

fn check_beta(beta: f64) -> Result<(), AnalysisError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::InvalidArgument(format!("SINR threshold must be positive (got {beta})")))
    }
}

pub fn coverage_at_location(
    model: &Model,
    ue: UeLocation,
    beta: f64,
    opts: &AnalysisOptions,
) -> Result<CoverageResult, AnalysisError> {
    check_beta(beta)?;
    Ok(LocationAnalysis::new(model, ue, opts)?.coverage(beta))
}

pub fn coverage_perfect_alignment(
    model: &Model,
    ue: UeLocation,
    beta: f64,
    opts: &AnalysisOptions,
) -> Result<f64, AnalysisError> {
    check_beta(beta)?;
    Ok(LocationAnalysis::new(model, ue, opts)?.coverage_perfect_alignment(beta))
}

/// Coverage averaged over the fundamental region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AverageCoverage {
    /// Integral divided by the region's area: a probability.
    pub normalized: f64,
    /// Plain integral over the region in fractional coordinates.
    pub integral: f64,
    pub area: f64,
}

/// Quadrature-weighted average of `f` over the fundamental region.
pub fn region_average(
    topology: Topology,
    n_quad: usize,
    f: impl Fn(UeLocation) -> Result<f64, AnalysisError> + Sync,
) -> Result<AverageCoverage, AnalysisError> {
    let nodes = fundamental_region_quadrature(topology, n_quad)?;
    let values = nodes.par_iter().map(|(p, _)| f(*p)).collect::<Result<Vec<_>, _>>()?;
    let integral: f64 = nodes.iter().zip(&values).map(|((_, w), v)| w * v).sum();
    let area: f64 = nodes.iter().map(|(_, w)| w).sum();
    Ok(AverageCoverage {
        normalized: integral / area,
        integral,
        area,
    })
}

pub fn average_coverage(
    model: &Model,
    beta: f64,
    n_quad: usize,
    opts: &AnalysisOptions,
) -> Result<AverageCoverage, AnalysisError> {
    Ok(average_coverage_curve(model, &[beta], n_quad, opts)?.remove(0))
}

/// Average coverage at several thresholds, sharing the per-node analysis.
pub fn average_coverage_curve(
    model: &Model,
    betas: &[f64],
    n_quad: usize,
    opts: &AnalysisOptions,
) -> Result<Vec<AverageCoverage>, AnalysisError> {
    for &b in betas {
        check_beta(b)?;
    }
    if n_quad < 16 {
        return Err(AnalysisError::InvalidArgument(format!("n_quad must be at least 16 (got {n_quad})")));
    }
    let topology = model.topology();
    let nodes = fundamental_region_quadrature(topology, n_quad)?;
    let per_node = nodes
        .par_iter()
        .map(|(p, _)| {
            let la = LocationAnalysis::new(model, *p, opts)?;
            Ok(betas.iter().map(|&b| la.coverage(b).p_c).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let area: f64 = nodes.iter().map(|(_, w)| w).sum();
    Ok((0..betas.len())
        .map(|k| {
            let integral: f64 = nodes.iter().zip(&per_node).map(|((_, w), v)| w * v[k]).sum();
            AverageCoverage {
                normalized: integral / area,
                integral,
                area,
            }
        })
        .collect())
}

/// Inter-AP distance giving AP density `lambda_a` (m^-2).
pub fn density_spacing(topology: Topology, lambda_a: f64) -> Result<f64, AnalysisError> {
    let c = crate::geometry::GridConstants::of(topology)?;
    if !(lambda_a > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("AP density must be positive (got {lambda_a})")));
    }
    Ok((1.0 / (c.c2 * lambda_a)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityPoint {
    pub lambda_a: f64,
    pub d_ap: f64,
    pub p_c: f64,
}

/// Coverage at a representative location as the AP density varies, with
/// fractional UE coordinates held fixed.
pub fn coverage_vs_density(
    model: &Model,
    location_id: u8,
    beta: f64,
    lambda_a_grid: &[f64],
    opts: &AnalysisOptions,
) -> Result<Vec<DensityPoint>, AnalysisError> {
    check_beta(beta)?;
    let topology = model.topology();
    let ue = representative_location(topology, location_id)?;
    lambda_a_grid
        .iter()
        .map(|&lambda_a| {
            let d_ap = density_spacing(topology, lambda_a)?;
            let m = model
                .with(|p| p.d_ap = d_ap)
                .map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
            let p_c = LocationAnalysis::new(&m, ue, opts)?.coverage(beta).p_c;
            Ok(DensityPoint { lambda_a, d_ap, p_c })
        })
        .collect()
}

/// Area of the fundamental region in fractional coordinates.
pub fn region_area(topology: Topology) -> Result<f64, AnalysisError> {
    let v = fundamental_region(topology)?;
    let mut a2 = 0.0;
    for k in 0..v.len() {
        let (p, q) = (v[k], v[(k + 1) % v.len()]);
        a2 += p[0] * q[1] - q[0] * p[1];
    }
    Ok(a2.abs() / 2.0)
}
