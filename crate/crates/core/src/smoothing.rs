//! Gaussian smoothing of the noisy oracle.
//!
//! The smoothed surrogate is `ftilde(x) = E[Fhat(x + Z)]`, `Z ~ N(0, sigma^2 I)`.
//! It is differentiable even when the oracle is not, and the one-sample
//! estimator `g_Z(x) = Z (Fhat(x+Z) - Fhat(x)) / sigma^2` is unbiased for its
//! gradient. All Markov chains in this crate consume the oracle exclusively
//! through this surrogate.

use crate::error::{Error, Result};
use crate::noise::NoisyOracle;
use crate::rng::Stream;

/// Constants derived from the instance that parameterize step sizes, escape
/// bounds, and acceptance-rate bounds downstream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants {
    /// Bound on `|Fhat|` over the evaluation region: `2 lambda R + 2 beta`.
    pub oracle_bound: f64,
    /// Envelope constant of the smoothed surrogate: `6 lambda R + beta`.
    pub smoothed_bound: f64,
    /// Hessian bound of the surrogate: `4 * smoothed_bound / sigma^2`.
    pub hessian_bound: f64,
    /// Sub-Gaussian constant of the gradient estimator: `2 * smoothed_bound / sigma`.
    pub gradient_mgf_bound: f64,
    /// Direction cap for the sub-Gaussian property; fixed at 1.
    pub direction_cap: f64,
    /// Largest per-step variance for which boundary steps stay inside with
    /// probability 1/3: `(r' / (10 sqrt(2) (d + 20)))^2`.
    pub roundness_step_cap: f64,
    /// Lipschitz bound of the surrogate:
    /// `sqrt(2 d) / sigma * (2 lambda R (1 + 2 alpha) + 2 beta)`.
    pub smoothed_lipschitz: f64,
}

/// Compute the derived constants for an instance. `big_r` is the bounding
/// radius of the body, `r_prime` its rounding radius.
pub fn derived_constants(
    lambda: f64,
    big_r: f64,
    alpha: f64,
    beta: f64,
    sigma: f64,
    r_prime: f64,
    dim: usize,
) -> Result<DerivedConstants> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be positive"));
    }
    if !(lambda > 0.0 && big_r > 0.0 && r_prime > 0.0) {
        return Err(Error::invalid("lambda/big_r/r_prime", "must be positive"));
    }
    let d = dim as f64;
    let smoothed_bound = 6.0 * lambda * big_r + beta;
    Ok(DerivedConstants {
        oracle_bound: 2.0 * lambda * big_r + 2.0 * beta,
        smoothed_bound,
        hessian_bound: 4.0 * smoothed_bound / (sigma * sigma),
        gradient_mgf_bound: 2.0 * smoothed_bound / sigma,
        direction_cap: 1.0,
        roundness_step_cap: {
            let s = r_prime / (10.0 * std::f64::consts::SQRT_2 * (d + 20.0));
            s * s
        },
        smoothed_lipschitz: (2.0 * d).sqrt() / sigma
            * (2.0 * lambda * big_r * (1.0 + 2.0 * alpha) + 2.0 * beta),
    })
}

/// Smoothing radius balancing noise suppression against bias:
/// `sigma = 0.5 * min(beta / (lambda (1+alpha) sqrt(d)), thickening / sqrt(log(1/alpha) + d))`.
///
/// A zero `alpha` is substituted by `1e-6` (with a warning) since the second
/// branch degenerates; a zero `beta` collapses the first branch to zero, so it
/// is rejected and the caller should configure sigma explicitly.
pub fn select_sigma(lambda: f64, alpha: f64, beta: f64, dim: usize, thickening: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(
            "beta",
            "must be positive; with beta = 0 the formula collapses, set the sigma override instead",
        ));
    }
    if !(thickening > 0.0) {
        return Err(Error::invalid("thickening", "must be positive"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", "must lie in [0, 1)"));
    }
    let alpha_eff = if alpha == 0.0 {
        log::warn!("alpha = 0: using alpha_eff = 1e-6 in the smoothing-radius formula");
        1e-6
    } else {
        alpha
    };
    let d = dim as f64;
    let noise_branch = beta / (lambda * (1.0 + alpha) * d.sqrt());
    let boundary_branch = thickening / ((1.0 / alpha_eff).ln() + d).sqrt();
    Ok(0.5 * noise_branch.min(boundary_branch))
}

/// The noisy oracle seen through Gaussian smoothing at radius `sigma`.
#[derive(Clone, Debug)]
pub struct SmoothedOracle {
    pub oracle: NoisyOracle,
    pub sigma: f64,
    pub constants: DerivedConstants,
}

impl SmoothedOracle {
    /// `big_r`/`r_prime` describe the body the oracle lives on; the derived
    /// constants are computed from them and the oracle's declared bands.
    pub fn new(oracle: NoisyOracle, sigma: f64, big_r: f64, r_prime: f64) -> Result<SmoothedOracle> {
        let constants = derived_constants(
            oracle.base.lipschitz(),
            big_r,
            oracle.alpha(),
            oracle.beta(),
            sigma,
            r_prime,
            oracle.base.dim(),
        )?;
        Ok(SmoothedOracle { oracle, sigma, constants })
    }

    pub fn dim(&self) -> usize {
        self.oracle.base.dim()
    }

    /// One-sample unbiased estimator of the surrogate gradient.
    pub fn stochastic_gradient(&self, x: &[f64], stream: &mut Stream) -> Vec<f64> {
        let s2 = self.sigma * self.sigma;
        let mut z = stream.gaussian_vec(x.len());
        let shifted: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| xi + self.sigma * zi).collect();
        let delta = self.oracle.value(&shifted) - self.oracle.value(x);
        // g = (sigma z) * delta / sigma^2, with z the standard draw.
        let scale = delta * self.sigma / s2;
        z.iter_mut().for_each(|zi| *zi *= scale);
        z
    }

    /// Monte-Carlo estimate of `ftilde(x)`; returns (mean, standard error).
    pub fn value_mc(&self, x: &[f64], draws: u64, stream: &mut Stream) -> Result<(f64, f64)> {
        if draws == 0 {
            return Err(Error::invalid("draws", "must be positive"));
        }
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut shifted = vec![0.0; x.len()];
        for k in 0..draws {
            for (si, xi) in shifted.iter_mut().zip(x) {
                *si = xi + self.sigma * stream.gaussian();
            }
            let v = self.oracle.value(&shifted);
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
        }
        let stderr = if draws > 1 {
            (m2 / (draws - 1) as f64 / draws as f64).sqrt()
        } else {
            0.0
        };
        Ok((mean, stderr))
    }

    /// Monte-Carlo mean of the gradient estimator; returns the mean vector and
    /// per-coordinate standard errors.
    pub fn gradient_mc(
        &self,
        x: &[f64],
        draws: u64,
        stream: &mut Stream,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if draws == 0 {
            return Err(Error::invalid("draws", "must be positive"));
        }
        let d = x.len();
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for k in 0..draws {
            let g = self.stochastic_gradient(x, stream);
            for j in 0..d {
                let delta = g[j] - mean[j];
                mean[j] += delta / (k + 1) as f64;
                m2[j] += delta * (g[j] - mean[j]);
            }
        }
        let sem = m2
            .iter()
            .map(|v| if draws > 1 { (v / (draws - 1) as f64 / draws as f64).sqrt() } else { 0.0 })
            .collect();
        Ok((mean, sem))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use crate::noise::NoisyOracle;
    use crate::objective::{make_test_objective, shift_to_zero, ObjectiveKind};
    use crate::rng::Streams;

    #[test]
    fn sigma_formula_worked_value() {
        // 0.5 * min(0.1 / (1 * 1.1 * 1), 10 / sqrt(ln 10 + 1)) = 0.5 * 0.090909...
        let s = select_sigma(1.0, 0.1, 0.1, 1, 10.0).unwrap();
        assert!((s - 0.5 * 0.1 / 1.1).abs() < 1e-15, "sigma {s}");
    }

    #[test]
    fn sigma_scales_with_beta_and_dimension() {
        let s1 = select_sigma(1.0, 0.1, 0.1, 1, 100.0).unwrap();
        let s2 = select_sigma(1.0, 0.1, 0.2, 1, 100.0).unwrap();
        assert!((s2 / s1 - 2.0).abs() < 1e-12, "doubling beta doubles sigma in the noise branch");
        let s4 = select_sigma(1.0, 0.1, 0.1, 4, 100.0).unwrap();
        assert!((s1 / s4 - 2.0).abs() < 1e-12, "4x dimension halves the noise branch");
    }

    #[test]
    fn sigma_rejects_zero_beta_and_substitutes_zero_alpha() {
        assert!(select_sigma(1.0, 0.1, 0.0, 1, 1.0).is_err());
        let s = select_sigma(1.0, 0.0, 0.1, 1, 1.0).unwrap();
        let expect = 0.5 * (0.1f64 / 1.0).min(1.0 / ((1e6f64).ln() + 1.0).sqrt());
        assert!((s - expect).abs() < 1e-15);
    }

    #[test]
    fn derived_constants_worked_values() {
        let c = derived_constants(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(c.oracle_bound, 2.0);
        assert_eq!(c.smoothed_bound, 6.0);
        assert_eq!(c.hessian_bound, 24.0);
        assert_eq!(c.gradient_mgf_bound, 12.0);
        assert_eq!(c.direction_cap, 1.0);

        let r_prime = 10.0 * std::f64::consts::SQRT_2 * 21.0;
        let c = derived_constants(1.0, 1.0, 0.0, 0.0, 1.0, r_prime, 1).unwrap();
        assert!((c.roundness_step_cap - 1.0).abs() < 1e-12);

        let c = derived_constants(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 2).unwrap();
        assert!((c.smoothed_lipschitz - 4.0).abs() < 1e-12);
    }

    fn oracle_1d(kind: ObjectiveKind) -> SmoothedOracle {
        let body = ConvexBody::ball(vec![0.0], 9.0, 1.0).unwrap();
        let f = make_test_objective(kind, vec![0.0], &body, 0.0).unwrap();
        SmoothedOracle::new(NoisyOracle::noiseless(f, None), 0.5, 10.0, 1.0).unwrap()
    }

    #[test]
    fn gradient_estimator_is_zero_for_constant_oracle() {
        let f = shift_to_zero(|_: &[f64]| 5.0, |_: &[f64]| vec![0.0], vec![0.0], 1.0);
        // shift_to_zero anchors the constant to zero; add the constant back so
        // the oracle is genuinely constant and nonzero.
        let oracle = NoisyOracle::noiseless(f.with_added_constant(5.0), None);
        let so = SmoothedOracle::new(oracle, 0.3, 1.0, 0.5).unwrap();
        let streams = Streams::new(31);
        let mut s = streams.stream("smoothing", 0, 0);
        for _ in 0..100 {
            assert_eq!(so.stochastic_gradient(&[0.2], &mut s), vec![0.0]);
        }
    }

    #[test]
    fn gradient_estimator_unbiased_for_linear_oracle() {
        // Fhat(x) = x has ftilde' = 1 for any sigma.
        let f = shift_to_zero(|x: &[f64]| x[0], |_: &[f64]| vec![1.0], vec![0.0], 1.0);
        let oracle = NoisyOracle::noiseless(f, None);
        let so = SmoothedOracle::new(oracle, 1.0, 10.0, 1.0).unwrap();
        let streams = Streams::new(32);
        let mut s = streams.stream("smoothing", 0, 1);
        let (mean, sem) = so.gradient_mc(&[0.0], 100_000, &mut s).unwrap();
        assert!(
            (mean[0] - 1.0).abs() <= 3.0 * sem[0],
            "mean {} vs 1.0 (sem {})",
            mean[0],
            sem[0]
        );
    }

    #[test]
    fn gradient_estimator_unbiased_for_quadratic_oracle() {
        // F = x^2 (curvature 2): ftilde'(1) = 2 at sigma = 0.5.
        let so = oracle_1d(ObjectiveKind::Quadratic { curvatures: vec![2.0] });
        let streams = Streams::new(33);
        let mut s = streams.stream("smoothing", 0, 2);
        let (mean, sem) = so.gradient_mc(&[1.0], 200_000, &mut s).unwrap();
        assert!(
            (mean[0] - 2.0).abs() <= 3.0 * sem[0].max(0.005),
            "mean {} vs 2.0 (sem {})",
            mean[0],
            sem[0]
        );
    }

    #[test]
    fn value_mc_constant_and_quadratic() {
        let f = shift_to_zero(|_: &[f64]| 3.0, |_: &[f64]| vec![0.0], vec![0.0], 1.0);
        let oracle = NoisyOracle::noiseless(f.with_added_constant(3.0), None);
        let so = SmoothedOracle::new(oracle, 0.4, 1.0, 0.5).unwrap();
        let streams = Streams::new(34);
        let mut s = streams.stream("smoothing", 0, 3);
        let (v, se) = so.value_mc(&[0.1], 100, &mut s).unwrap();
        assert_eq!((v, se), (3.0, 0.0));

        // E[(x+Z)^2] at x=0 is sigma^2 = 0.25.
        let so = oracle_1d(ObjectiveKind::Quadratic { curvatures: vec![2.0] });
        let (v, se) = so.value_mc(&[0.0], 100_000, &mut s).unwrap();
        assert!((v - 0.25).abs() <= 3.0 * se, "value {v} vs 0.25 (se {se})");

        let (v1, se1) = so.value_mc(&[0.0], 1, &mut s).unwrap();
        assert!(v1 >= 0.0 && se1 == 0.0, "single draw returns the raw sample");
    }

    #[test]
    fn second_difference_respects_hessian_bound() {
        // Kinked base: the surrogate's curvature at the kink is about
        // scale * sqrt(2/pi) / sigma, far below hessian_bound = 4 M^ / sigma^2.
        let so = oracle_1d(ObjectiveKind::ScaledNorm { scale: 2.0 });
        let streams = Streams::new(35);
        let h = 0.05;
        let mut vals = [0.0; 3];
        for (i, x) in [[-h], [0.0], [h]].iter().enumerate() {
            // Re-deriving the same stream for each point shares the draws,
            // which keeps the difference quotient stable.
            let mut s = streams.stream("smoothing", 0, 4);
            let (v, _) = so.value_mc(x, 200_000, &mut s).unwrap();
            vals[i] = v;
        }
        let second = (vals[0] - 2.0 * vals[1] + vals[2]) / (h * h);
        assert!(second > 0.0, "surrogate is convex at the kink");
        assert!(
            second <= so.constants.hessian_bound,
            "second difference {second} exceeds bound {}",
            so.constants.hessian_bound
        );
    }

    #[test]
    fn gradient_mgf_is_subgaussian_within_direction_cap() {
        let so = oracle_1d(ObjectiveKind::Quadratic { curvatures: vec![1.0] });
        let g_bound = so.constants.gradient_mgf_bound;
        let streams = Streams::new(36);
        let mut s = streams.stream("smoothing", 0, 5);
        for trial in 0..10 {
            // |u| <= direction_cap / G, the regime the MGF bound covers.
            let u = s.uniform_range(-1.0, 1.0) * so.constants.direction_cap / g_bound;
            let x = [s.uniform_range(-2.0, 2.0)];
            let mut mgf = 0.0;
            let n = 100_000;
            for _ in 0..n {
                let g = so.stochastic_gradient(&x, &mut s);
                mgf += (u * g[0]).powi(2).exp() / n as f64;
            }
            let bound = (g_bound * g_bound * u * u).exp();
            assert!(
                mgf <= bound * 1.05,
                "trial {trial}: MGF {mgf} above sub-Gaussian bound {bound}"
            );
        }
    }
}
