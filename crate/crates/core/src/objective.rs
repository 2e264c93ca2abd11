//! Ground-truth convex objectives.
//!
//! Every objective carries its Lipschitz constant (a bound on the gradient
//! norm over the thickened body), a designated minimizer, and attains value
//! zero there. The four shipped families cover the regimes the solver is
//! exercised on: strongly curved, kinked-but-smoothed, piecewise-affine with
//! soft corners, and flat directions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::linalg::norm;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A convex objective with known minimizer and gradient access.
#[derive(Clone)]
pub struct ConvexObjective {
    dim: usize,
    eval: EvalFn,
    grad: GradFn,
    /// Bound on the gradient norm over the thickened body.
    lipschitz: f64,
    minimizer: Vec<f64>,
    /// Raw value at the minimizer that was subtracted so the minimum is zero.
    offset: f64,
}

impl std::fmt::Debug for ConvexObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexObjective")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("minimizer", &self.minimizer)
            .field("offset", &self.offset)
            .finish_non_exhaustive()
    }
}

impl ConvexObjective {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.eval)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.grad)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// Value subtracted from the raw function so that `evaluate(minimizer) == 0`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Add a constant to the objective (used by the shift search, which probes
    /// oracles whose minimum value is unknown).
    pub fn with_added_constant(&self, c: f64) -> ConvexObjective {
        let eval = self.eval.clone();
        ConvexObjective {
            dim: self.dim,
            eval: Arc::new(move |x| eval(x) + c),
            grad: self.grad.clone(),
            lipschitz: self.lipschitz,
            minimizer: self.minimizer.clone(),
            offset: self.offset - c,
        }
    }
}

/// Test families with closed-form gradients and known minimizers.
#[derive(Clone, Debug)]
pub enum ObjectiveKind {
    /// `0.5 * sum_j c_j (x_j - m_j)^2` with `c_j > 0`.
    Quadratic { curvatures: Vec<f64> },
    /// `scale * huber_w(|x - m|)` with Huber width `w = 1e-3 * R`; gradient
    /// norm is `scale` away from the minimizer and tapers linearly inside `w`.
    ScaledNorm { scale: f64 },
    /// Soft maximum of the affine pieces `+-scale * (x_j - m_j)` at width
    /// `width`; symmetric, so the designated minimizer is exact.
    SmoothedMaxAffine { scale: f64, width: f64 },
    /// Quadratic in a subset of coordinates; zero curvature elsewhere, so the
    /// minimizer is non-unique but the designated one still attains zero.
    FlatValley { curvatures: Vec<f64> },
}

/// Build one of the shipped objective families.
///
/// `thickening` is the extra Minkowski radius of the evaluation region; the
/// Lipschitz bound is taken over the body thickened by that amount.
pub fn make_test_objective(
    kind: ObjectiveKind,
    minimizer: Vec<f64>,
    body: &ConvexBody,
    thickening: f64,
) -> Result<ConvexObjective> {
    let d = body.dim();
    if minimizer.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: minimizer.len() });
    }
    if !body.contains(&minimizer) {
        return Err(Error::invalid("minimizer", "must lie inside the body"));
    }
    if !(thickening >= 0.0) {
        return Err(Error::invalid("thickening", "must be nonnegative"));
    }
    // Radius of a ball around the minimizer covering the thickened body.
    let reach = body.bounding_radius()
        + thickening
        + crate::linalg::dist(body.bounding_center(), &minimizer);
    match kind {
        ObjectiveKind::Quadratic { curvatures } => {
            check_curvatures(&curvatures, d, true)?;
            let m = minimizer.clone();
            let c = curvatures.clone();
            let cmax = curvatures.iter().cloned().fold(0.0, f64::max);
            let mg = minimizer.clone();
            let cg = curvatures;
            Ok(ConvexObjective {
                dim: d,
                eval: Arc::new(move |x| {
                    0.5 * x
                        .iter()
                        .zip(&m)
                        .zip(&c)
                        .map(|((xi, mi), ci)| ci * (xi - mi) * (xi - mi))
                        .sum::<f64>()
                }),
                grad: Arc::new(move |x| {
                    x.iter().zip(&mg).zip(&cg).map(|((xi, mi), ci)| ci * (xi - mi)).collect()
                }),
                lipschitz: cmax * reach,
                minimizer,
                offset: 0.0,
            })
        }
        ObjectiveKind::ScaledNorm { scale } => {
            if !(scale > 0.0) {
                return Err(Error::invalid("scale", "must be positive"));
            }
            let w = 1e-3 * body.bounding_radius();
            let m = minimizer.clone();
            let mg = minimizer.clone();
            Ok(ConvexObjective {
                dim: d,
                eval: Arc::new(move |x| {
                    let t = crate::linalg::dist(x, &m);
                    if t <= w {
                        scale * t * t / (2.0 * w)
                    } else {
                        scale * (t - 0.5 * w)
                    }
                }),
                grad: Arc::new(move |x| {
                    let diff: Vec<f64> = x.iter().zip(&mg).map(|(a, b)| a - b).collect();
                    let t = norm(&diff);
                    if t == 0.0 {
                        return diff;
                    }
                    let g = scale * (t.min(w) / w) / t;
                    diff.iter().map(|v| v * g).collect()
                }),
                lipschitz: scale,
                minimizer,
                offset: 0.0,
            })
        }
        ObjectiveKind::SmoothedMaxAffine { scale, width } => {
            if !(scale > 0.0) {
                return Err(Error::invalid("scale", "must be positive"));
            }
            if !(width > 0.0) {
                return Err(Error::invalid("width", "must be positive"));
            }
            // Soft max over the 2d affine pieces +-scale (x_j - m_j), centered
            // so the value at the minimizer is exactly zero.
            let base = (2.0 * d as f64).ln();
            let value = move |x: &[f64], m: &[f64]| -> f64 {
                let mut exps = Vec::with_capacity(2 * x.len());
                for (xi, mi) in x.iter().zip(m) {
                    let a = scale * (xi - mi) / width;
                    exps.push(a);
                    exps.push(-a);
                }
                width * (crate::linalg::log_sum_exp(&exps) - base)
            };
            let m = minimizer.clone();
            let mg = minimizer.clone();
            Ok(ConvexObjective {
                dim: d,
                eval: Arc::new(move |x| value(x, &m)),
                grad: Arc::new(move |x| {
                    // Softmax weights of the same pieces, computed stably.
                    let mut a: Vec<f64> = x
                        .iter()
                        .zip(&mg)
                        .map(|(xi, mi)| scale * (xi - mi) / width)
                        .collect();
                    let amax = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                    let mut z = 0.0;
                    for v in &a {
                        z += (v - amax).exp() + (-v - amax).exp();
                    }
                    for v in a.iter_mut() {
                        *v = scale * ((*v - amax).exp() - (-*v - amax).exp()) / z;
                    }
                    a
                }),
                lipschitz: scale,
                minimizer,
                offset: 0.0,
            })
        }
        ObjectiveKind::FlatValley { curvatures } => {
            check_curvatures(&curvatures, d, false)?;
            let m = minimizer.clone();
            let c = curvatures.clone();
            let cmax = curvatures.iter().cloned().fold(0.0, f64::max);
            let mg = minimizer.clone();
            let cg = curvatures;
            Ok(ConvexObjective {
                dim: d,
                eval: Arc::new(move |x| {
                    0.5 * x
                        .iter()
                        .zip(&m)
                        .zip(&c)
                        .map(|((xi, mi), ci)| ci * (xi - mi) * (xi - mi))
                        .sum::<f64>()
                }),
                grad: Arc::new(move |x| {
                    x.iter().zip(&mg).zip(&cg).map(|((xi, mi), ci)| ci * (xi - mi)).collect()
                }),
                lipschitz: cmax * reach,
                minimizer,
                offset: 0.0,
            })
        }
    }
}

fn check_curvatures(c: &[f64], d: usize, strictly_positive: bool) -> Result<()> {
    if c.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.len() });
    }
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("curvatures", "must be finite and nonnegative"));
    }
    if strictly_positive && c.iter().any(|v| *v <= 0.0) {
        return Err(Error::invalid("curvatures", "must be strictly positive"));
    }
    if !strictly_positive && c.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("curvatures", "at least one must be positive"));
    }
    Ok(())
}

/// Wrap a raw convex function so its value at the designated minimizer is
/// exactly zero. The raw function is probed once at the minimizer.
pub fn shift_to_zero(
    raw_eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    raw_grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    minimizer: Vec<f64>,
    lipschitz: f64,
) -> ConvexObjective {
    let offset = raw_eval(&minimizer);
    ConvexObjective {
        dim: minimizer.len(),
        eval: Arc::new(move |x| raw_eval(x) - offset),
        grad: Arc::new(raw_grad),
        lipschitz,
        minimizer,
        offset,
    }
}

/// Assemble a `ConvexObjective` from explicit parts (used by the noisy-system
/// builder, which knows its own gradient and Lipschitz bound).
pub(crate) fn from_parts(
    dim: usize,
    eval: EvalFn,
    grad: GradFn,
    lipschitz: f64,
    minimizer: Vec<f64>,
    offset: f64,
) -> ConvexObjective {
    ConvexObjective { dim, eval, grad, lipschitz, minimizer, offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    fn body2(r: f64) -> ConvexBody {
        ConvexBody::ball(vec![0.0, 0.0], r - 0.5, 0.5).unwrap()
    }

    fn families(body: &ConvexBody) -> Vec<ConvexObjective> {
        let d = body.dim();
        vec![
            make_test_objective(
                ObjectiveKind::Quadratic { curvatures: vec![1.0; d] },
                vec![0.0; d],
                body,
                0.5,
            )
            .unwrap(),
            make_test_objective(ObjectiveKind::ScaledNorm { scale: 2.0 }, vec![0.0; d], body, 0.5)
                .unwrap(),
            make_test_objective(
                ObjectiveKind::SmoothedMaxAffine { scale: 1.5, width: 0.2 },
                vec![0.0; d],
                body,
                0.5,
            )
            .unwrap(),
            make_test_objective(
                ObjectiveKind::FlatValley { curvatures: vec![1.0, 0.0] },
                vec![0.0; d],
                body,
                0.5,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let body = body2(10.0);
        let f = make_test_objective(
            ObjectiveKind::Quadratic { curvatures: vec![1.0, 1.0] },
            vec![0.0, 0.0],
            &body,
            0.0,
        )
        .unwrap();
        assert_eq!(f.evaluate(&[3.0, 4.0]), 12.5);
        assert_eq!(f.gradient(&[3.0, 4.0]), vec![3.0, 4.0]);
        assert_eq!(f.evaluate(f.minimizer()), 0.0);
    }

    #[test]
    fn flat_valley_is_flat_off_axis() {
        let body = body2(10.0);
        let f = make_test_objective(
            ObjectiveKind::FlatValley { curvatures: vec![1.0, 0.0] },
            vec![0.0, 0.0],
            &body,
            0.0,
        )
        .unwrap();
        assert_eq!(f.evaluate(&[0.0, 5.0]), 0.0);
        assert_eq!(f.gradient(&[0.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(f.evaluate(&[2.0, -3.0]), 2.0);
    }

    #[test]
    fn minimizer_outside_body_is_rejected() {
        let body = body2(1.0);
        let r = make_test_objective(
            ObjectiveKind::Quadratic { curvatures: vec![1.0, 1.0] },
            vec![5.0, 0.0],
            &body,
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn shift_to_zero_removes_offset_and_is_idempotent() {
        let raw = |x: &[f64]| 0.5 * (x[0] - 3.0) * (x[0] - 3.0) + 7.0;
        let grad = |x: &[f64]| vec![x[0] - 3.0];
        let f = shift_to_zero(raw, grad, vec![3.0], 10.0);
        assert_eq!(f.offset(), 7.0);
        assert_eq!(f.evaluate(&[3.0]), 0.0);
        assert_eq!(f.evaluate(&[5.0]), 2.0);

        let e2 = f.clone();
        let g2 = f.clone();
        let again = shift_to_zero(
            move |x: &[f64]| e2.evaluate(x),
            move |x: &[f64]| g2.gradient(x),
            vec![3.0],
            10.0,
        );
        assert_eq!(again.offset(), 0.0, "already-anchored objective shifts by zero");
        assert_eq!(again.evaluate(&[5.0]), 2.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let body = body2(4.0);
        let streams = Streams::new(11);
        let mut s = streams.stream("objective", 0, 0);
        for (fi, f) in families(&body).iter().enumerate() {
            for _ in 0..250 {
                let x = s.uniform_in_ball(&[0.0, 0.0], 3.5);
                let g = f.gradient(&x);
                let h = 1e-6 * body.bounding_radius();
                for j in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (f.evaluate(&xp) - f.evaluate(&xm)) / (2.0 * h);
                    let scale = g[j].abs().max(1.0);
                    assert!(
                        (fd - g[j]).abs() / scale < 1e-4,
                        "family {fi}: fd {fd} vs grad {} at {x:?}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_norm_stays_below_lipschitz_bound() {
        let body = body2(4.0);
        let streams = Streams::new(12);
        let mut s = streams.stream("objective", 0, 1);
        for (fi, f) in families(&body).iter().enumerate() {
            for _ in 0..10_000 {
                let x = s.uniform_in_ball(&[0.0, 0.0], 4.5); // thickened reach
                let g = norm(&f.gradient(&x));
                assert!(
                    g <= f.lipschitz() * (1.0 + 1e-12),
                    "family {fi}: gradient norm {g} exceeds lambda {}",
                    f.lipschitz()
                );
            }
        }
    }

    #[test]
    fn midpoint_convexity_holds() {
        let body = body2(4.0);
        let streams = Streams::new(13);
        let mut s = streams.stream("objective", 0, 2);
        for (fi, f) in families(&body).iter().enumerate() {
            for _ in 0..10_000 {
                let x = s.uniform_in_ball(&[0.0, 0.0], 4.0);
                let y = s.uniform_in_ball(&[0.0, 0.0], 4.0);
                let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let lhs = f.evaluate(&mid);
                let rhs = 0.5 * f.evaluate(&x) + 0.5 * f.evaluate(&y);
                assert!(
                    lhs <= rhs + 1e-10,
                    "family {fi}: midpoint value {lhs} above chord {rhs}"
                );
            }
        }
    }

    #[test]
    fn values_are_nonnegative_with_zero_at_minimizer() {
        let body = body2(4.0);
        let streams = Streams::new(14);
        let mut s = streams.stream("objective", 0, 3);
        for (fi, f) in families(&body).iter().enumerate() {
            assert_eq!(f.evaluate(f.minimizer()), 0.0, "family {fi}");
            for _ in 0..5000 {
                let x = s.uniform_in_ball(&[0.0, 0.0], 4.0);
                assert!(f.evaluate(&x) >= 0.0, "family {fi} negative at {x:?}");
            }
        }
    }
}
