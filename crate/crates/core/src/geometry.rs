//! Convex feasible regions with rounded boundary.
//!
//! A [`ConvexBody`] is the Minkowski sum of an inner convex set and a
//! Euclidean ball of radius `rounding`. Membership therefore reduces to a
//! distance query against the inner set: `x` belongs to the body iff
//! `dist(x, inner) <= rounding`, evaluated with a floating tolerance of
//! `1e-12 * bounding_radius`. The rounding guarantees that a ball of positive
//! radius fits inside the body at every boundary point, which the samplers
//! and the annealing schedule both rely on.

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::rng::Stream;

/// Maximum rejection-sampling attempts before giving up.
pub const SAMPLE_BUDGET: u64 = 1_000_000;

const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// The inner convex set of a body, before rounding.
#[derive(Clone, Debug)]
pub enum InnerSet {
    /// Euclidean ball; radius zero degenerates to a point.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Intersection of half-spaces `{x : <normal_i, x> <= offset_i}` with the
    /// ball `B(center, radius)`, which keeps the set bounded.
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        center: Vec<f64>,
        radius: f64,
    },
}

/// A rounded convex body: inner set Minkowski-plus a ball of radius `rounding`.
#[derive(Clone, Debug)]
pub struct ConvexBody {
    inner: InnerSet,
    rounding: f64,
    dim: usize,
    bounding_center: Vec<f64>,
    bounding_radius: f64,
}

impl ConvexBody {
    /// Rounded ball: inner ball of `inner_radius` plus rounding `rounding`.
    pub fn ball(center: Vec<f64>, inner_radius: f64, rounding: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("center", "dimension must be positive"));
        }
        if !(inner_radius >= 0.0) {
            return Err(Error::invalid("inner_radius", "must be nonnegative"));
        }
        check_rounding(rounding)?;
        let bounding_radius = inner_radius + rounding;
        Ok(ConvexBody {
            dim: center.len(),
            bounding_center: center.clone(),
            bounding_radius,
            inner: InnerSet::Ball { center, radius: inner_radius },
            rounding,
        })
    }

    /// Rounded axis-aligned box.
    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>, rounding: f64) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len().max(1), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::invalid("lo/hi", "box must satisfy lo <= hi"));
        }
        check_rounding(rounding)?;
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_diag = dist(&lo, &hi) * 0.5;
        Ok(ConvexBody {
            dim: lo.len(),
            bounding_center: center,
            bounding_radius: half_diag + rounding,
            inner: InnerSet::Box { lo, hi },
            rounding,
        })
    }

    /// Rounded intersection of half-spaces, bounded by `B(center, inner_radius)`.
    pub fn halfspace_intersection(
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        center: Vec<f64>,
        inner_radius: f64,
        rounding: f64,
    ) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("center", "dimension must be positive"));
        }
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch { expected: normals.len(), got: offsets.len() });
        }
        for n in &normals {
            if n.len() != center.len() {
                return Err(Error::DimensionMismatch { expected: center.len(), got: n.len() });
            }
            if norm(n) == 0.0 {
                return Err(Error::invalid("normals", "zero normal vector"));
            }
        }
        if !(inner_radius > 0.0) {
            return Err(Error::invalid("inner_radius", "must be positive"));
        }
        check_rounding(rounding)?;
        let body = ConvexBody {
            dim: center.len(),
            bounding_center: center.clone(),
            bounding_radius: inner_radius + rounding,
            inner: InnerSet::Halfspaces { normals, offsets, center, radius: inner_radius },
            rounding,
        };
        // Detect an empty intersection up front: the projection of the bounding
        // center must come to rest on a feasible point.
        let p = body.inner_projection(body.bounding_center());
        let worst = body.constraint_violation(&p);
        if worst > 1e-7 * body.bounding_radius {
            return Err(Error::invalid(
                "halfspaces",
                format!("intersection appears empty (residual violation {worst:.3e})"),
            ));
        }
        Ok(body)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rounding(&self) -> f64 {
        self.rounding
    }

    /// Center of a ball containing the whole body.
    pub fn bounding_center(&self) -> &[f64] {
        &self.bounding_center
    }

    /// Radius of a ball containing the whole body.
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn membership_tolerance(&self) -> f64 {
        1e-12 * self.bounding_radius
    }

    /// Minkowski-add a further ball of radius `extra` (the thickened body).
    pub fn thickened(&self, extra: f64) -> ConvexBody {
        assert!(extra >= 0.0, "thickening must be nonnegative");
        let mut out = self.clone();
        out.rounding += extra;
        out.bounding_radius += extra;
        out
    }

    /// Shrink the rounding by `t`, i.e. erode the body by `t`. Requires
    /// `t <= rounding`; the result may have zero rounding (the bare inner set).
    pub fn eroded(&self, t: f64) -> Result<ConvexBody> {
        if !(0.0..=self.rounding).contains(&t) {
            return Err(Error::invalid("t", "erosion must lie in [0, rounding]"));
        }
        let mut out = self.clone();
        out.rounding -= t;
        out.bounding_radius -= t;
        Ok(out)
    }

    /// Euclidean distance from `x` to the inner set (zero inside it).
    pub fn inner_distance(&self, x: &[f64]) -> f64 {
        match &self.inner {
            InnerSet::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            InnerSet::Box { lo, hi } => {
                let mut d2 = 0.0;
                for ((xi, a), b) in x.iter().zip(lo).zip(hi) {
                    let e = if xi < a { a - xi } else if xi > b { xi - b } else { 0.0 };
                    d2 += e * e;
                }
                d2.sqrt()
            }
            InnerSet::Halfspaces { .. } => dist(x, &self.inner_projection(x)),
        }
    }

    /// Nearest point of the inner set, via Dykstra's alternating projections
    /// for half-space intersections and closed forms otherwise.
    pub fn inner_projection(&self, x: &[f64]) -> Vec<f64> {
        match &self.inner {
            InnerSet::Ball { center, radius } => {
                let d = dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    center.iter().zip(x).map(|(c, xi)| c + s * (xi - c)).collect()
                }
            }
            InnerSet::Box { lo, hi } => x
                .iter()
                .zip(lo)
                .zip(hi)
                .map(|((xi, a), b)| xi.max(*a).min(*b))
                .collect(),
            InnerSet::Halfspaces { normals, offsets, center, radius } => {
                let tol = 1e-10 * self.bounding_radius;
                let m = normals.len() + 1;
                let mut p = x.to_vec();
                let mut corrections = vec![vec![0.0; self.dim]; m];
                for _ in 0..DYKSTRA_MAX_SWEEPS {
                    let sweep_start = p.clone();
                    for (k, e) in corrections.iter_mut().enumerate() {
                        let mut y: Vec<f64> = p.iter().zip(e.iter()).map(|(a, b)| a + b).collect();
                        let projected = if k < normals.len() {
                            project_halfspace(&y, &normals[k], offsets[k])
                        } else {
                            project_ball(&y, center, *radius)
                        };
                        for i in 0..self.dim {
                            e[i] = y[i] - projected[i];
                            y[i] = projected[i];
                        }
                        p = y;
                    }
                    if dist(&p, &sweep_start) <= tol {
                        break;
                    }
                }
                p
            }
        }
    }

    /// Largest half-space/ball violation at `x` (zero when feasible).
    fn constraint_violation(&self, x: &[f64]) -> f64 {
        match &self.inner {
            InnerSet::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            InnerSet::Box { .. } => self.inner_distance(x),
            InnerSet::Halfspaces { normals, offsets, center, radius } => {
                let mut worst = (dist(x, center) - radius).max(0.0);
                for (n, b) in normals.iter().zip(offsets) {
                    worst = worst.max((crate::linalg::dot(n, x) - b) / norm(n));
                }
                worst.max(0.0)
            }
        }
    }

    /// Membership in the rounded body.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        self.inner_distance(x) <= self.rounding + self.membership_tolerance()
    }
}

fn check_rounding(rounding: f64) -> Result<()> {
    if !(rounding > 0.0) {
        return Err(Error::invalid("rounding", "must be positive"));
    }
    Ok(())
}

fn project_halfspace(x: &[f64], normal: &[f64], offset: f64) -> Vec<f64> {
    let s = crate::linalg::dot(normal, x) - offset;
    if s <= 0.0 {
        return x.to_vec();
    }
    let n2 = crate::linalg::norm2(normal);
    x.iter().zip(normal).map(|(xi, ni)| xi - s * ni / n2).collect()
}

fn project_ball(x: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d = dist(x, center);
    if d <= radius {
        return x.to_vec();
    }
    let s = radius / d;
    center.iter().zip(x).map(|(c, xi)| c + s * (xi - c)).collect()
}

/// Uniform sample from `B(center, radius)` intersected with the body, by
/// rejection. Returns the point and the number of rejected draws.
pub fn sample_uniform_ball_intersect(
    body: &ConvexBody,
    center: &[f64],
    radius: f64,
    stream: &mut Stream,
) -> Result<(Vec<f64>, u64)> {
    if center.len() != body.dim() {
        return Err(Error::DimensionMismatch { expected: body.dim(), got: center.len() });
    }
    if !(radius >= 0.0) {
        return Err(Error::invalid("radius", "must be nonnegative"));
    }
    if radius == 0.0 {
        if body.contains(center) {
            return Ok((center.to_vec(), 0));
        }
        return Err(Error::PointOutsideBody);
    }
    let mut rejections = 0;
    while rejections < SAMPLE_BUDGET {
        let x = stream.uniform_in_ball(center, radius);
        if body.contains(&x) {
            return Ok((x, rejections));
        }
        rejections += 1;
    }
    Err(Error::RejectionBudget { budget: SAMPLE_BUDGET })
}

/// Probability that a Gaussian step `x + sqrt(2 zeta) W`, `W ~ N(0, I)`,
/// stays inside the body, estimated over `trials` draws.
pub fn roundness_probability(
    body: &ConvexBody,
    x: &[f64],
    zeta: f64,
    trials: u64,
    stream: &mut Stream,
) -> Result<f64> {
    if x.len() != body.dim() {
        return Err(Error::DimensionMismatch { expected: body.dim(), got: x.len() });
    }
    if !body.contains(x) {
        return Err(Error::PointOutsideBody);
    }
    if !(zeta >= 0.0) {
        return Err(Error::invalid("zeta", "must be nonnegative"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let scale = (2.0 * zeta).sqrt();
    let mut hits = 0u64;
    let mut y = vec![0.0; body.dim()];
    for _ in 0..trials {
        stream.fill_gaussian(&mut y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + scale * *yi;
        }
        if body.contains(&y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}
