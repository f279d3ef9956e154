//! Human and wall blockage probabilities, and the joint statistics of wall
//! blockage across links that share wall crossings.
//!
//! Walls are axis-parallel lines placed by two independent 1D Poisson
//! processes. A link is wall-unblocked iff no wall crosses its x- or
//! y-projection, so a set of links is jointly unblocked iff no wall crosses
//! the union of their projections. Projections are anchored at the UE, so
//! the union along an axis is the longest projection on each side.

use thiserror::Error;

use crate::geometry::LinkGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockageError {
    #[error("union of an empty link set")]
    EmptyLinkSet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockageProbs {
    pub p_h: f64,
    pub p_w: f64,
    pub p: f64,
}

impl BlockageProbs {
    pub fn of(link: &LinkGeometry, alpha: f64, lambda_w: f64) -> Self {
        let p_h = human_unblocked(link.d, alpha);
        let p_w = wall_unblocked(link.d_x(), link.d_y(), lambda_w);
        BlockageProbs { p_h, p_w, p: p_h * p_w }
    }
}

pub fn human_unblocked(d: f64, alpha: f64) -> f64 {
    (-alpha * d).exp()
}

pub fn wall_unblocked(d_x: f64, d_y: f64, lambda_w: f64) -> f64 {
    (-lambda_w * (d_x + d_y)).exp()
}

/// Longest projection on each side of the UE along both axes.
///
/// `x_pos` collects links whose signed offset `x` (UE minus AP) is
/// positive; the side naming is a bookkeeping convention only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionExtents {
    pub x_pos: f64,
    pub x_neg: f64,
    pub y_pos: f64,
    pub y_neg: f64,
}

impl ProjectionExtents {
    pub fn of(link: &LinkGeometry) -> Self {
        let mut e = ProjectionExtents::default();
        e.add(link);
        e
    }

    pub fn add(&mut self, link: &LinkGeometry) {
        if link.x > 0.0 {
            self.x_pos = self.x_pos.max(link.x);
        } else {
            self.x_neg = self.x_neg.max(-link.x);
        }
        if link.y > 0.0 {
            self.y_pos = self.y_pos.max(link.y);
        } else {
            self.y_neg = self.y_neg.max(-link.y);
        }
    }

    pub fn with(mut self, link: &LinkGeometry) -> Self {
        self.add(link);
        self
    }

    pub fn union_x(&self) -> f64 {
        self.x_pos + self.x_neg
    }

    pub fn union_y(&self) -> f64 {
        self.y_pos + self.y_neg
    }

    pub fn total(&self) -> f64 {
        self.union_x() + self.union_y()
    }

    pub fn wall_unblocked(&self, lambda_w: f64) -> f64 {
        (-lambda_w * self.total()).exp()
    }
}

pub fn union_extents(links: &[LinkGeometry]) -> Result<ProjectionExtents, BlockageError> {
    if links.is_empty() {
        return Err(BlockageError::EmptyLinkSet);
    }
    let mut e = ProjectionExtents::default();
    for l in links {
        e.add(l);
    }
    Ok(e)
}

/// Union length of two UE-anchored intervals given by signed offsets:
/// the longer one if they point the same way, their sum otherwise.
pub fn pairwise_union(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        a.abs().max(b.abs())
    } else {
        a.abs() + b.abs()
    }
}

/// Union lengths `(x, y)` as the largest pairwise union over all pairs.
pub fn pairwise_max_union(links: &[LinkGeometry]) -> (f64, f64) {
    let mut ux = 0.0f64;
    let mut uy = 0.0f64;
    for a in links {
        for b in links {
            ux = ux.max(pairwise_union(a.x, b.x));
            uy = uy.max(pairwise_union(a.y, b.y));
        }
    }
    (ux, uy)
}

pub fn joint_wall_unblocked(links: &[LinkGeometry], lambda_w: f64) -> Result<f64, BlockageError> {
    Ok(union_extents(links)?.wall_unblocked(lambda_w))
}

/// Length shared by two UE-anchored intervals with signed offsets `a`, `b`.
pub fn shared_length(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        a.abs().min(b.abs())
    } else {
        0.0
    }
}

/// `Pr(both clear) - Pr(a clear) Pr(b clear)`, written as
/// `pa pb (exp(lambda_W * shared) - 1)` so disjoint projections give exactly 0.
pub fn wall_covariance(a: &LinkGeometry, b: &LinkGeometry, lambda_w: f64) -> f64 {
    let shared = shared_length(a.x, b.x) + shared_length(a.y, b.y);
    let pa = ProjectionExtents::of(a).wall_unblocked(lambda_w);
    let pb = ProjectionExtents::of(b).wall_unblocked(lambda_w);
    pa * pb * (lambda_w * shared).exp_m1()
}

/// Probability that `target` is wall-unblocked given `given` is.
pub fn conditional_wall_unblocked(target: &LinkGeometry, given: &LinkGeometry, lambda_w: f64) -> f64 {
    let g = ProjectionExtents::of(given);
    let tg = g.with(target);
    (-lambda_w * (tg.total() - g.total())).exp()
}

/// Covariance of the wall-unblocked indicators of `a` and `b` given that
/// `given` is wall-unblocked.
pub fn conditional_wall_covariance(
    a: &LinkGeometry,
    b: &LinkGeometry,
    given: &LinkGeometry,
    lambda_w: f64,
) -> f64 {
    let g = ProjectionExtents::of(given);
    let rel = |e: ProjectionExtents| (-lambda_w * (e.total() - g.total())).exp();
    let pab = rel(g.with(a).with(b));
    let pa = rel(g.with(a));
    let pb = rel(g.with(b));
    pab - pa * pb
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link(x: f64, y: f64) -> LinkGeometry {
        LinkGeometry { d: x.hypot(y), x, y }
    }

    #[test]
    fn marginals() {
        assert_eq!(human_unblocked(0.0, 0.0117647), 1.0);
        assert!((human_unblocked(10.0, 2.0 * 0.1 * 0.25 * 0.4 / 1.7) - 0.88901).abs() < 1e-5);
        assert_eq!(human_unblocked(123.0, 0.0), 1.0);
        assert!((wall_unblocked(7.5, 7.5, 0.02) - 0.74082).abs() < 1e-5);
        assert_eq!(wall_unblocked(7.5, 7.5, 0.0), 1.0);
        assert_eq!(wall_unblocked(15.0, 0.0, 0.02), wall_unblocked(7.5, 7.5, 0.02));
        let b = BlockageProbs::of(&link(3.0, -4.0), 0.01, 0.02);
        assert!((b.p - b.p_h * b.p_w).abs() < 1e-16);
    }

    #[test]
    fn unions() {
        let u = |xs: &[f64]| union_extents(&xs.iter().map(|&x| link(x, 0.0)).collect::<Vec<_>>()).unwrap().union_x();
        assert_eq!(u(&[3.0, 5.0]), 5.0);
        assert_eq!(u(&[3.0, -5.0]), 8.0);
        assert_eq!(u(&[3.0, 5.0, -2.0]), 7.0);
        let single = union_extents(&[link(-4.0, 2.5)]).unwrap();
        assert_eq!((single.union_x(), single.union_y()), (4.0, 2.5));
        assert_eq!(union_extents(&[]), Err(BlockageError::EmptyLinkSet));
    }

    #[test]
    fn joint_cases() {
        let lw = 0.02;
        let short = link(5.0, 2.0);
        let long = link(10.0, 4.0);
        let j = joint_wall_unblocked(&[short, long], lw).unwrap();
        assert!((j - wall_unblocked(10.0, 4.0, lw)).abs() < 1e-15);
        let a = link(5.0, 2.0);
        let b = link(-6.0, -3.0);
        let j = joint_wall_unblocked(&[a, b], lw).unwrap();
        assert!((j - wall_unblocked(5.0, 2.0, lw) * wall_unblocked(6.0, 3.0, lw)).abs() < 1e-15);
        assert_eq!(joint_wall_unblocked(&[a], lw).unwrap(), wall_unblocked(5.0, 2.0, lw));
    }

    #[test]
    fn covariance_cases() {
        let lw = 0.02;
        assert_eq!(wall_covariance(&link(5.0, 2.0), &link(-6.0, -3.0), lw), 0.0);
        assert_eq!(wall_covariance(&link(5.0, -2.0), &link(-6.0, 3.0), lw), 0.0);
        let a = link(7.0, -3.0);
        let p = wall_unblocked(7.0, 3.0, lw);
        assert!((wall_covariance(&a, &a, lw) - p * (1.0 - p)).abs() < 1e-15);
        let c = wall_covariance(&link(7.5, 0.0), &link(15.0, 0.0), lw);
        assert!((c - (-0.3f64).exp() * (1.0 - (-0.15f64).exp())).abs() < 1e-15);
        assert!((c - 0.10320).abs() < 1e-5);
    }

    #[test]
    fn conditional_cases() {
        let lw = 0.02;
        let g = link(10.0, 4.0);
        assert!((conditional_wall_unblocked(&link(5.0, 2.0), &g, lw) - 1.0).abs() < 1e-15);
        let t = link(-6.0, -3.0);
        assert!((conditional_wall_unblocked(&t, &g, lw) - wall_unblocked(6.0, 3.0, lw)).abs() < 1e-15);
        let c = conditional_wall_unblocked(&link(15.0, 0.0), &link(7.5, 0.0), lw);
        assert!((c - (-0.15f64).exp()).abs() < 1e-15);
        assert!((c - 0.86071).abs() < 1e-5);
    }

    #[test]
    fn conditional_covariance_cases() {
        let lw = 0.05;
        let (a, b, g) = (link(3.0, 0.0), link(0.0, 4.0), link(-5.0, -2.0));
        assert!(wall_covariance(&a, &b, lw).abs() < 1e-16);
        assert!(conditional_wall_covariance(&a, &b, &g, lw).abs() < 1e-16);
        let q = conditional_wall_unblocked(&a, &g, lw);
        assert!((conditional_wall_covariance(&a, &a, &g, lw) - q * (1.0 - q)).abs() < 1e-15);

        // collinear, same direction, g = 5 < A = 10 < B = 15: enumerate the
        // wall state of the segments (5,10] and (10,15] given (0,5] is clear
        let (ga, aa, ba) = (link(5.0, 0.0), link(10.0, 0.0), link(15.0, 0.0));
        let clear1 = (-lw * 5.0f64).exp();
        let clear2 = (-lw * 5.0f64).exp();
        let mut e_a = 0.0;
        let mut e_b = 0.0;
        let mut e_ab = 0.0;
        for s1 in [false, true] {
            for s2 in [false, true] {
                let pr = if s1 { clear1 } else { 1.0 - clear1 } * if s2 { clear2 } else { 1.0 - clear2 };
                let ia = s1 as u8 as f64;
                let ib = (s1 && s2) as u8 as f64;
                e_a += pr * ia;
                e_b += pr * ib;
                e_ab += pr * ia * ib;
            }
        }
        let brute = e_ab - e_a * e_b;
        let formula = conditional_wall_covariance(&aa, &ba, &ga, lw);
        assert!((formula - brute).abs() < 1e-15, "{formula} vs {brute}");
    }

    fn arb_link() -> impl Strategy<Value = LinkGeometry> {
        (-40.0f64..40.0, -40.0f64..40.0).prop_map(|(x, y)| link(x, y))
    }

    proptest! {
        #[test]
        fn covariance_nonnegative(a in arb_link(), b in arb_link(), lw in 0.0f64..0.2) {
            let c = wall_covariance(&a, &b, lw);
            prop_assert!(c >= 0.0);
            let disjoint = a.x * b.x <= 0.0 && a.y * b.y <= 0.0;
            if disjoint {
                prop_assert!(c.abs() < 1e-15);
            }
        }

        #[test]
        fn joint_properties(links in prop::collection::vec(arb_link(), 1..8), lw in 0.0f64..0.2, rot in 0usize..8) {
            let j = joint_wall_unblocked(&links, lw).unwrap();
            for l in &links {
                prop_assert!(j <= wall_unblocked(l.d_x(), l.d_y(), lw) + 1e-15);
            }
            let mut perm = links.clone();
            perm.rotate_left(rot % links.len());
            perm.push(links[0]);
            prop_assert!((joint_wall_unblocked(&perm, lw).unwrap() - j).abs() < 1e-15);
        }

        #[test]
        fn extents_match_pairwise_formula(links in prop::collection::vec(arb_link(), 1..8)) {
            let e = union_extents(&links).unwrap();
            let (ux, uy) = pairwise_max_union(&links);
            prop_assert!((e.union_x() - ux).abs() < 1e-12);
            prop_assert!((e.union_y() - uy).abs() < 1e-12);
        }

        #[test]
        fn extents_match_interval_union(xs in prop::collection::vec(-30.0f64..30.0, 1..10)) {
            // measure of the union of [min(0,x), max(0,x)] by sweeping sorted endpoints
            let mut iv: Vec<(f64, f64)> = xs.iter().map(|&x| (x.min(0.0), x.max(0.0))).collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut total = 0.0;
            let (mut lo, mut hi) = iv[0];
            for &(a, b) in &iv[1..] {
                if a > hi {
                    total += hi - lo;
                    lo = a;
                    hi = b;
                } else {
                    hi = hi.max(b);
                }
            }
            total += hi - lo;
            let links: Vec<_> = xs.iter().map(|&x| link(x, 0.0)).collect();
            prop_assert!((union_extents(&links).unwrap().union_x() - total).abs() < 1e-12);
        }
    }
}
