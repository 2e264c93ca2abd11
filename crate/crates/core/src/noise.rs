//! Noisy oracle layer.
//!
//! A [`NoisyOracle`] exposes `Fhat(x) = F(x) (1 + psi(x)) + phi(x)` with
//! `|psi| <= alpha` (multiplicative band) and `|phi| <= beta` (additive band).
//! The corruptions are deterministic functions of `x`: reading the oracle
//! twice at the same point returns the same value, which is what the band and
//! ratio arguments downstream require. Outside the declared evaluation domain
//! (the thickened body) the oracle returns zero.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_ball_intersect, ConvexBody};
use crate::linalg::{dot, norm};
use crate::objective::ConvexObjective;
use crate::rng::{Stream, Streams};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Deterministic noisy view of a convex objective.
#[derive(Clone)]
pub struct NoisyOracle {
    pub base: ConvexObjective,
    fhat: ScalarFn,
    psi: ScalarFn,
    phi: ScalarFn,
    alpha: f64,
    beta: f64,
    alpha_dagger: f64,
    domain: Option<ConvexBody>,
}

impl std::fmt::Debug for NoisyOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoisyOracle")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("alpha_dagger", &self.alpha_dagger)
            .field("has_domain", &self.domain.is_some())
            .finish_non_exhaustive()
    }
}

impl NoisyOracle {
    /// Oracle with no corruption at all.
    pub fn noiseless(base: ConvexObjective, domain: Option<ConvexBody>) -> NoisyOracle {
        let b = base.clone();
        NoisyOracle {
            base,
            fhat: Arc::new(move |x| b.evaluate(x)),
            psi: Arc::new(|_| 0.0),
            phi: Arc::new(|_| 0.0),
            alpha: 0.0,
            beta: 0.0,
            alpha_dagger: 0.0,
            domain,
        }
    }

    /// Assemble an oracle from explicit band functions. `psi` and `phi` must
    /// respect the declared levels; `verify_noise_bounds` audits that claim.
    pub fn from_bands(
        base: ConvexObjective,
        psi: ScalarFn,
        phi: ScalarFn,
        alpha: f64,
        beta: f64,
        alpha_dagger: f64,
        domain: Option<ConvexBody>,
    ) -> Result<NoisyOracle> {
        check_levels(alpha, beta, alpha_dagger)?;
        let b = base.clone();
        let (p, q) = (psi.clone(), phi.clone());
        Ok(NoisyOracle {
            base,
            fhat: Arc::new(move |x| b.evaluate(x) * (1.0 + p(x)) + q(x)),
            psi,
            phi,
            alpha,
            beta,
            alpha_dagger,
            domain,
        })
    }

    /// Noisy value; zero outside the evaluation domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        if let Some(domain) = &self.domain {
            if !domain.contains(x) {
                return 0.0;
            }
        }
        (self.fhat)(x)
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        (self.psi)(x)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        (self.phi)(x)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Lower multiplicative margin: `psi > -alpha_dagger` with
    /// `alpha_dagger < 1`, so `1 + psi` stays bounded away from zero.
    pub fn alpha_dagger(&self) -> f64 {
        self.alpha_dagger
    }

    pub fn domain(&self) -> Option<&ConvexBody> {
        self.domain.as_ref()
    }

    /// Subtract a constant from the oracle (shift-search probes). The base
    /// objective is shifted identically so value comparisons stay aligned.
    pub fn shifted(&self, c: f64) -> NoisyOracle {
        let fhat = self.fhat.clone();
        NoisyOracle {
            base: self.base.with_added_constant(-c),
            fhat: Arc::new(move |x| fhat(x) - c),
            psi: self.psi.clone(),
            phi: self.phi.clone(),
            alpha: self.alpha,
            beta: self.beta,
            alpha_dagger: self.alpha_dagger,
            domain: self.domain.clone(),
        }
    }
}

fn check_levels(alpha: f64, beta: f64, alpha_dagger: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "must be finite and nonnegative"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", "must be finite and nonnegative"));
    }
    if !((0.0..1.0).contains(&alpha_dagger)) {
        return Err(Error::invalid("alpha_dagger", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Default lower multiplicative margin for a given `alpha`.
pub fn default_alpha_dagger(alpha: f64) -> f64 {
    (2.0 * alpha).min(0.99)
}

/// A band-limited ripple with sup-norm exactly 1: the product of sinusoids
/// along a seeded orthonormal frame, with seeded phases. Local extrema recur
/// at the wavelength scale in every direction.
#[derive(Clone, Debug)]
pub struct RippleField {
    frame: Vec<Vec<f64>>,
    phases: Vec<f64>,
    wavelength: f64,
}

impl RippleField {
    pub fn new(dim: usize, wavelength: f64, seed: u64) -> Result<RippleField> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if !(wavelength > 0.0) {
            return Err(Error::invalid("wavelength", "must be positive"));
        }
        let streams = Streams::new(seed);
        let mut s = streams.stream("ripple-frame", 0, 0);
        let frame = random_orthonormal_frame(dim, &mut s);
        let phases = (0..dim).map(|_| s.uniform_range(0.0, std::f64::consts::TAU)).collect();
        Ok(RippleField { frame, phases, wavelength })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let k = std::f64::consts::TAU / self.wavelength;
        self.frame
            .iter()
            .zip(&self.phases)
            .map(|(u, th)| (k * dot(u, x) + th).sin())
            .product()
    }
}

fn random_orthonormal_frame(dim: usize, s: &mut Stream) -> Vec<Vec<f64>> {
    loop {
        let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut ok = true;
        for _ in 0..dim {
            let mut v = s.gaussian_vec(dim);
            for u in &frame {
                let c = dot(&v, u);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
            let n = norm(&v);
            if n < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|vi| *vi /= n);
            frame.push(v);
        }
        if ok {
            return frame;
        }
    }
}

/// Ripple-band oracle: `psi = alpha * ripple_1`, `phi = beta * ripple_2` with
/// independent seeded frames, so the band levels are met with equality at the
/// ripple peaks.
pub fn make_ripple_noise(
    base: ConvexObjective,
    alpha: f64,
    beta: f64,
    wavelength: f64,
    seed: u64,
    domain: Option<ConvexBody>,
) -> Result<NoisyOracle> {
    let d = base.dim();
    let psi_field = RippleField::new(d, wavelength, seed ^ 0x7065_7273)?;
    let phi_field = RippleField::new(d, wavelength, seed ^ 0x6164_6421)?;
    NoisyOracle::from_bands(
        base,
        Arc::new(move |x| alpha * psi_field.value(x)),
        Arc::new(move |x| beta * phi_field.value(x)),
        alpha,
        beta,
        default_alpha_dagger(alpha),
        domain,
    )
}

/// An affine equation system `h_i(x) = <a_i, x - solution>`, reported through
/// the mean-square residual `F(x) = (1/n) sum h_i(x)^2`.
#[derive(Clone, Debug)]
pub struct EquationSystem {
    pub rows: Vec<Vec<f64>>,
    pub solution: Vec<f64>,
}

impl EquationSystem {
    pub fn residual(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().zip(x.iter().zip(&self.solution)).map(|(a, (xi, si))| a * (xi - si)).sum()
    }
}

/// Component-level noise for an equation system: each residual is reported as
/// `h_i + ripple_i * (b + a |h_i|)`, so `|noise_i| <= b + a |h_i|`.
#[derive(Clone, Copy, Debug)]
pub struct ComponentNoise {
    pub a: f64,
    pub b: f64,
    pub wavelength: f64,
    pub seed: u64,
}

/// Declared oracle-level noise bands implied by component levels `(a, b)`:
/// `alpha = 2a + a^2 + 2b + 2ab` and `beta = (b + ab)/2 + b^2`.
pub fn equation_system_levels(a: f64, b: f64) -> (f64, f64) {
    let alpha = 2.0 * a + a * a + 2.0 * b + 2.0 * a * b;
    let beta = 0.5 * (b + a * b) + b * b;
    (alpha, beta)
}

/// Build the noisy mean-square-residual oracle for an affine system.
///
/// The returned bands `(alpha, beta)` come from [`equation_system_levels`];
/// `psi`/`phi` are recovered from the realized deviation by clipping the
/// multiplicative part at `alpha * F`, which keeps both bands tight.
pub fn make_equation_system_oracle(
    system: EquationSystem,
    noise: ComponentNoise,
    body: &ConvexBody,
    thickening: f64,
) -> Result<NoisyOracle> {
    let d = body.dim();
    if system.solution.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: system.solution.len() });
    }
    if system.rows.is_empty() {
        return Err(Error::invalid("rows", "system must have at least one equation"));
    }
    for row in &system.rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
    }
    if !(noise.a >= 0.0 && noise.b >= 0.0) {
        return Err(Error::invalid("component noise", "levels must be nonnegative"));
    }
    if !body.contains(&system.solution) {
        return Err(Error::invalid("solution", "must lie inside the body"));
    }

    let n = system.rows.len();
    let reach = body.bounding_radius()
        + thickening
        + crate::linalg::dist(body.bounding_center(), &system.solution);
    let lipschitz = 2.0 / n as f64 * system.rows.iter().map(|r| crate::linalg::norm2(r)).sum::<f64>() * reach;

    let sys_eval = system.clone();
    let base_eval = move |x: &[f64]| -> f64 {
        (0..n).map(|i| sys_eval.residual(i, x).powi(2)).sum::<f64>() / n as f64
    };
    let sys_grad = system.clone();
    let base_grad = move |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (i, row) in sys_grad.rows.iter().enumerate() {
            let h = sys_grad.residual(i, x);
            for (gj, aj) in g.iter_mut().zip(row) {
                *gj += 2.0 * aj * h / n as f64;
            }
        }
        g
    };
    let base = crate::objective::from_parts(
        d,
        Arc::new(base_eval.clone()),
        Arc::new(base_grad),
        lipschitz,
        system.solution.clone(),
        0.0,
    );

    let ripples: Vec<RippleField> = (0..n)
        .map(|i| RippleField::new(d, noise.wavelength, noise.seed.wrapping_add(i as u64 * 0x9e37)))
        .collect::<Result<_>>()?;
    let sys_hat = system.clone();
    let (a, b) = (noise.a, noise.b);
    let fhat = move |x: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let h = sys_hat.residual(i, x);
            let noisy = h + ripples[i].value(x) * (b + a * h.abs());
            acc += noisy * noisy;
        }
        acc / n as f64
    };

    let (alpha, beta) = equation_system_levels(a, b);
    // Recover bands from the realized deviation: multiplicative part clipped
    // at alpha * F, remainder additive. Exact: F_hat = F (1 + psi) + phi.
    let be = base_eval.clone();
    let fh = fhat.clone();
    let psi = move |x: &[f64]| -> f64 {
        let f = be(x);
        if f <= 0.0 || alpha == 0.0 {
            return 0.0;
        }
        let delta = fh(x) - f;
        delta.signum() * delta.abs().min(alpha * f) / f
    };
    let be2 = base_eval.clone();
    let fh2 = fhat.clone();
    let psi2 = psi.clone();
    let phi = move |x: &[f64]| -> f64 { fh2(x) - be2(x) * (1.0 + psi2(x)) };

    Ok(NoisyOracle {
        base,
        fhat: Arc::new(fhat),
        psi: Arc::new(psi),
        phi: Arc::new(phi),
        alpha,
        beta,
        alpha_dagger: default_alpha_dagger(alpha),
        domain: Some(body.thickened(thickening)),
    })
}

/// Result of auditing an oracle against its declared bands.
#[derive(Clone, Debug)]
pub struct NoiseAudit {
    /// Max over samples of `|Fhat - F| - (alpha F + beta)`; nonpositive means
    /// the declared envelope held everywhere sampled.
    pub max_violation: f64,
    pub worst_point: Vec<f64>,
    pub samples: u64,
}

/// Sample the body uniformly and report the worst deviation of `Fhat` from
/// the declared noise envelope around `F`.
pub fn verify_noise_bounds(
    oracle: &NoisyOracle,
    body: &ConvexBody,
    samples: u64,
    stream: &mut Stream,
) -> Result<NoiseAudit> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let c = body.bounding_center().to_vec();
    let r = body.bounding_radius();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = Vec::new();
    for _ in 0..samples {
        let (x, _) = sample_uniform_ball_intersect(body, &c, r, stream)?;
        let f = oracle.base.evaluate(&x);
        let violation = (oracle.value(&x) - f).abs() - (oracle.alpha() * f + oracle.beta());
        if violation > worst {
            worst = violation;
            worst_point = x;
        }
    }
    Ok(NoiseAudit { max_violation: worst, worst_point, samples })
}
