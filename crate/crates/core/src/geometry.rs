//! Lattice coordinates, AP-UE link geometry, and the fundamental region.
//!
//! Grid coordinates `(i, j)` and UE coordinates `(x0, y0)` are fractions of
//! the inter-AP distance along the two lattice axes. For the hexagonal grid
//! the axes meet at 60 degrees; the constants `c1`, `c2` map both grids onto
//! physical Cartesian coordinates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("topology '{0}' has no lattice")]
    NotAGrid(Topology),
    #[error("representative location must be 1, 2 or 3 (got {0})")]
    InvalidLocation(u8),
    #[error("inter-AP distance must be positive (got {0})")]
    Spacing(f64),
}

/// Relative tolerance under which two link distances count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConstants {
    pub c1: f64,
    pub c2: f64,
}

impl GridConstants {
    pub fn of(topology: Topology) -> Result<Self, GeometryError> {
        match topology {
            Topology::Square => Ok(GridConstants { c1: 0.0, c2: 1.0 }),
            Topology::Hexagonal => Ok(GridConstants {
                c1: 0.5,
                c2: 3f64.sqrt() / 2.0,
            }),
            Topology::Ppp => Err(GeometryError::NotAGrid(topology)),
        }
    }
}

/// UE position in lattice fractions of `d_AP`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeLocation {
    pub x0: f64,
    pub y0: f64,
}

impl UeLocation {
    pub const fn new(x0: f64, y0: f64) -> Self {
        UeLocation { x0, y0 }
    }

    pub fn in_fundamental_region(&self, topology: Topology) -> bool {
        const TOL: f64 = 1e-12;
        let UeLocation { x0, y0 } = *self;
        let base = -TOL <= y0 && y0 <= x0 + TOL && x0 <= 0.5 + TOL;
        match topology {
            Topology::Square => base,
            Topology::Hexagonal => base && x0 + y0 / 2.0 <= 0.5 + TOL,
            Topology::Ppp => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ApIndex {
    pub i: i64,
    pub j: i64,
}

impl ApIndex {
    pub const fn new(i: i64, j: i64) -> Self {
        ApIndex { i, j }
    }
}

/// Horizontal geometry of one AP-UE link.
///
/// `x` and `y` are the signed physical offsets UE minus AP along the two
/// wall axes; their magnitudes are the link's axis projections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub d: f64,
    pub x: f64,
    pub y: f64,
}

impl LinkGeometry {
    pub fn from_points(ue: [f64; 2], ap: [f64; 2]) -> Self {
        let x = ue[0] - ap[0];
        let y = ue[1] - ap[1];
        LinkGeometry {
            d: x.hypot(y),
            x,
            y,
        }
    }

    pub fn d_x(&self) -> f64 {
        self.x.abs()
    }

    pub fn d_y(&self) -> f64 {
        self.y.abs()
    }

    pub fn sgn_x(&self) -> f64 {
        sign(self.x)
    }

    pub fn sgn_y(&self) -> f64 {
        sign(self.y)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A square or hexagonal AP lattice with spacing `d_ap` metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub topology: Topology,
    pub d_ap: f64,
    pub c: GridConstants,
}

impl Lattice {
    pub fn new(topology: Topology, d_ap: f64) -> Result<Self, GeometryError> {
        if !(d_ap > 0.0 && d_ap.is_finite()) {
            return Err(GeometryError::Spacing(d_ap));
        }
        Ok(Lattice {
            topology,
            d_ap,
            c: GridConstants::of(topology)?,
        })
    }

    pub fn ap_position(&self, idx: ApIndex) -> [f64; 2] {
        let (i, j) = (idx.i as f64, idx.j as f64);
        [(i + self.c.c1 * j) * self.d_ap, self.c.c2 * j * self.d_ap]
    }

    pub fn ue_position(&self, ue: UeLocation) -> [f64; 2] {
        [
            (ue.x0 + self.c.c1 * ue.y0) * self.d_ap,
            self.c.c2 * ue.y0 * self.d_ap,
        ]
    }

    pub fn link(&self, ue: UeLocation, idx: ApIndex) -> LinkGeometry {
        let dy = ue.y0 - idx.j as f64;
        let dx = ue.x0 - idx.i as f64 + self.c.c1 * dy;
        let x = self.d_ap * dx;
        let y = self.c.c2 * self.d_ap * dy;
        let d = self.d_ap * (dx * dx + self.c.c2 * self.c.c2 * dy * dy).sqrt();
        LinkGeometry { d, x, y }
    }

    /// Area of one lattice cell, m^2.
    pub fn cell_area(&self) -> f64 {
        self.c.c2 * self.d_ap * self.d_ap
    }

    /// Longest chord of the lattice's unit parallelogram, m.
    pub fn cell_diameter(&self) -> f64 {
        let a = self.ap_position(ApIndex::new(1, 1));
        let b = self.ap_position(ApIndex::new(1, -1));
        a[0].hypot(a[1]).max(b[0].hypot(b[1]))
    }

    /// All APs within `radius` metres of the UE, in link order.
    ///
    /// Link order sorts by distance; distances equal within
    /// [`TIE_TOLERANCE`] are broken by `i`, then `j`, ascending.
    pub fn aps_within(&self, ue: UeLocation, radius: f64) -> Vec<(ApIndex, LinkGeometry)> {
        if !(radius >= 0.0) {
            return Vec::new();
        }
        let limit = radius * (1.0 + 1e-12);
        let span_j = radius / (self.c.c2 * self.d_ap);
        let span_i = radius / self.d_ap;
        let j_lo = (ue.y0 - span_j).floor() as i64 - 1;
        let j_hi = (ue.y0 + span_j).ceil() as i64 + 1;
        let mut out = Vec::new();
        for j in j_lo..=j_hi {
            let centre = ue.x0 + self.c.c1 * (ue.y0 - j as f64);
            let i_lo = (centre - span_i).floor() as i64 - 1;
            let i_hi = (centre + span_i).ceil() as i64 + 1;
            for i in i_lo..=i_hi {
                let idx = ApIndex::new(i, j);
                let link = self.link(ue, idx);
                if link.d <= limit {
                    out.push((idx, link));
                }
            }
        }
        sort_links(&mut out);
        out
    }

    /// APs that precede `idx` in link order (all strictly closer APs plus
    /// equidistant APs with a smaller `(i, j)`).
    pub fn closer_set(&self, ue: UeLocation, idx: ApIndex) -> Vec<ApIndex> {
        let d = self.link(ue, idx).d;
        let list = self.aps_within(ue, d);
        list.iter()
            .take_while(|(k, _)| *k != idx)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Sorts links into link order: by distance, with near-equal distances
/// grouped and ordered by `(i, j)`.
pub fn sort_links(links: &mut [(ApIndex, LinkGeometry)]) {
    links.sort_by(|a, b| a.1.d.total_cmp(&b.1.d).then(a.0.cmp(&b.0)));
    let mut start = 0;
    while start < links.len() {
        let mut end = start + 1;
        while end < links.len() && is_tie(links[end - 1].1.d, links[end].1.d) {
            end += 1;
        }
        if end - start > 1 {
            links[start..end].sort_by_key(|a| a.0);
        }
        start = end;
    }
}

pub fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()) + 1e-12
}

/// Distance comparison that treats ties as equal.
pub fn cmp_distance(a: f64, b: f64) -> Ordering {
    if is_tie(a, b) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// The three evaluation positions: under the AP, midway, and farthest.
pub fn representative_location(topology: Topology, which: u8) -> Result<UeLocation, GeometryError> {
    let far = match topology {
        Topology::Square => 0.5,
        Topology::Hexagonal => 1.0 / 3.0,
        Topology::Ppp => return Err(GeometryError::NotAGrid(topology)),
    };
    match which {
        1 => Ok(UeLocation::new(0.0, 0.0)),
        2 => Ok(UeLocation::new(far / 2.0, far / 2.0)),
        3 => Ok(UeLocation::new(far, far)),
        other => Err(GeometryError::InvalidLocation(other)),
    }
}

/// Vertices of the fundamental region `{0 <= y <= min(x, 1 - 4 c1 x), x <= 1/2}`.
pub fn fundamental_region(topology: Topology) -> Result<Vec<[f64; 2]>, GeometryError> {
    match topology {
        Topology::Square => Ok(vec![[0.0, 0.0], [0.5, 0.0], [0.5, 0.5]]),
        Topology::Hexagonal => Ok(vec![[0.0, 0.0], [0.5, 0.0], [1.0 / 3.0, 1.0 / 3.0]]),
        Topology::Ppp => Err(GeometryError::NotAGrid(topology)),
    }
}

/// Midpoint-style product rule over the fundamental region.
///
/// A uniform grid of about `n_points` cells covers the region's bounding
/// box; each cell is clipped to the region and contributes one node at the
/// clipped centroid, weighted by the clipped area. Weights sum to the
/// region's area.
pub fn fundamental_region_quadrature(
    topology: Topology,
    n_points: usize,
) -> Result<Vec<(UeLocation, f64)>, GeometryError> {
    let region = fundamental_region(topology)?;
    let m = (n_points.max(1) as f64).sqrt().ceil() as usize;
    let y_max = region.iter().map(|v| v[1]).fold(0.0, f64::max);
    let hx = 0.5 / m as f64;
    let hy = y_max / m as f64;
    let mut nodes = Vec::new();
    for a in 0..m {
        for b in 0..m {
            let (x0, y0) = (a as f64 * hx, b as f64 * hy);
            let cell = vec![[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]];
            let clipped = clip_convex(&cell, &region);
            if clipped.len() < 3 {
                continue;
            }
            let (area, c) = area_centroid(&clipped);
            if area > 1e-15 * hx * hy {
                nodes.push((UeLocation::new(c[0], c[1]), area));
            }
        }
    }
    Ok(nodes)
}

/// Sutherland-Hodgman clip of `subject` against the counter-clockwise convex `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for e in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[e];
        let b = clip[(e + 1) % clip.len()];
        let inside = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-15;
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                out.push(intersect(prev, cur, a, b));
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

fn intersect(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [b[0] - a[0], b[1] - a[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    let t = ((a[0] - p[0]) * s[1] - (a[1] - p[1]) * s[0]) / denom;
    [p[0] + t * r[0], p[1] + t * r[1]]
}

fn area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let cross = p[0] * q[1] - q[0] * p[1];
        a2 += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let area = a2 / 2.0;
    if area.abs() < f64::MIN_POSITIVE {
        return (0.0, poly[0]);
    }
    (area.abs(), [cx / (3.0 * a2), cy / (3.0 * a2)])
}
