//! Langevin chains over the smoothed oracle.
//!
//! Three kernels share one proposal: from `x`, draw `P ~ N(0, I)` and propose
//! `x' = x - eta g(x) + sqrt(2 eta / xi) P`, rejecting proposals that leave
//! the body or travel farther than the step cap `D`.
//!
//! * [`sgld_run`]: the unadjusted chain the solver actually uses; the output
//!   point is the visited state with the smallest oracle value.
//! * [`metropolis_sgld_run`]: a lazy Metropolis-adjusted variant used only as
//!   a diagnostic; with the Gaussian-density ratio its stationary law on the
//!   body is proportional to `exp(-xi * ftilde)`.
//! * [`coupled_run`]: the two chains driven by shared Gaussians through a
//!   lazy time change, plus a copy on a restricted body; used to observe
//!   where the adjusted and unadjusted dynamics first part ways.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::linalg::{dist, log_sum_exp, norm};
use crate::rng::{Stream, Streams};

/// Factor of the bounding radius beyond which a drift step is considered
/// degenerate and the run aborts.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Parameters of one unadjusted chain run.
#[derive(Clone, Copy, Debug)]
pub struct SgldParams {
    /// Inverse temperature.
    pub xi: f64,
    /// Step size.
    pub eta: f64,
    /// Number of steps; the trace has `steps + 1` entries.
    pub steps: usize,
    /// Maximum move length per step.
    pub step_cap: f64,
}

impl SgldParams {
    fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid("xi", "must be positive and finite"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive and finite"));
        }
        if !(self.step_cap > 0.0) {
            return Err(Error::invalid("step_cap", "must be positive"));
        }
        Ok(())
    }
}

/// Counters describing how proposals fared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChainStats {
    /// Steps at which the lazy coin allowed a move (Metropolis chain only).
    pub active_steps: u64,
    /// Steps skipped by the lazy coin.
    pub lazy_holds: u64,
    /// Proposals rejected for leaving the body or exceeding the step cap.
    pub geometry_rejects: u64,
    /// Active proposals that passed the geometry check.
    pub metropolis_considered: u64,
    /// Geometry-feasible proposals rejected by the acceptance ratio.
    pub metropolis_rejects: u64,
}

/// Recorded trajectory of a chain.
#[derive(Clone, Debug)]
pub struct ChainTrace {
    /// Oracle objective per recorded state (for the Metropolis diagnostic
    /// this is the surrogate value the chain targets).
    pub values: Vec<f64>,
    /// Ground-truth objective per state, when a truth oracle was supplied.
    pub f_true: Vec<f64>,
    /// Whether the step's proposal was accepted; entry 0 is `true`.
    pub accepted: Vec<bool>,
    /// Visited states; empty unless state recording was requested.
    pub states: Vec<Vec<f64>>,
    /// Index of the smallest recorded value.
    pub best_index: usize,
    pub best_value: f64,
    pub best_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub stats: ChainStats,
}

impl ChainTrace {
    fn new(record_states: bool, capacity: usize) -> ChainTrace {
        ChainTrace {
            values: Vec::with_capacity(capacity),
            f_true: Vec::new(),
            accepted: Vec::with_capacity(capacity),
            states: if record_states { Vec::with_capacity(capacity) } else { Vec::new() },
            best_index: 0,
            best_value: f64::INFINITY,
            best_state: Vec::new(),
            final_state: Vec::new(),
            stats: ChainStats::default(),
        }
    }

    fn record(&mut self, state: &[f64], value: f64, f_true: Option<f64>, accepted: bool, keep: bool) {
        let idx = self.values.len();
        self.values.push(value);
        self.accepted.push(accepted);
        if let Some(t) = f_true {
            self.f_true.push(t);
        }
        if keep {
            self.states.push(state.to_vec());
        }
        if value < self.best_value {
            self.best_value = value;
            self.best_index = idx;
            self.best_state = state.to_vec();
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ground truth at the running best-by-oracle-value state, per step.
    /// `None` when no truth oracle was recorded.
    pub fn best_true_trajectory(&self) -> Option<Vec<f64>> {
        if self.f_true.len() != self.values.len() {
            return None;
        }
        let mut best = f64::INFINITY;
        let mut best_true = f64::NAN;
        let mut out = Vec::with_capacity(self.values.len());
        for (v, t) in self.values.iter().zip(&self.f_true) {
            if *v < best {
                best = *v;
                best_true = *t;
            }
            out.push(best_true);
        }
        Some(out)
    }
}

fn check_start(body: &ConvexBody, x0: &[f64]) -> Result<()> {
    if x0.len() != body.dim() {
        return Err(Error::DimensionMismatch { expected: body.dim(), got: x0.len() });
    }
    if !body.contains(x0) {
        return Err(Error::PointOutsideBody);
    }
    Ok(())
}

/// The shared proposal map: `x - eta g + sqrt(2 eta / xi) p`.
pub fn sgld_propose(x: &[f64], g: &[f64], p: &[f64], params: &SgldParams) -> Vec<f64> {
    let noise_scale = (2.0 * params.eta / params.xi).sqrt();
    x.iter()
        .zip(g)
        .zip(p)
        .map(|((xi, gi), pi)| xi - params.eta * gi + noise_scale * pi)
        .collect()
}

/// One unadjusted step; returns the new state and whether the proposal was
/// accepted (it is rejected only on geometry grounds).
pub fn sgld_step(
    body: &ConvexBody,
    x: &[f64],
    g: &[f64],
    p: &[f64],
    params: &SgldParams,
) -> (Vec<f64>, bool) {
    let candidate = sgld_propose(x, g, p, params);
    if body.contains(&candidate) && dist(&candidate, x) <= params.step_cap {
        (candidate, true)
    } else {
        (x.to_vec(), false)
    }
}

/// Run the unadjusted chain for `params.steps` steps from `x0`, recording the
/// oracle value at every state; the best state is the argmin of those values.
pub fn sgld_run(
    body: &ConvexBody,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    fhat: &dyn Fn(&[f64]) -> f64,
    f_true: Option<&dyn Fn(&[f64]) -> f64>,
    params: &SgldParams,
    x0: &[f64],
    noise: &mut Stream,
    record_states: bool,
) -> Result<ChainTrace> {
    let mut buf = vec![0.0; body.dim()];
    sgld_run_with(
        body,
        grad,
        fhat,
        f_true,
        params,
        x0,
        &mut move |out: &mut [f64]| {
            let _ = &mut buf;
            noise.fill_gaussian(out)
        },
        record_states,
    )
}

/// Same as [`sgld_run`] with an injectable Gaussian source (test hook).
pub(crate) fn sgld_run_with(
    body: &ConvexBody,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    fhat: &dyn Fn(&[f64]) -> f64,
    f_true: Option<&dyn Fn(&[f64]) -> f64>,
    params: &SgldParams,
    x0: &[f64],
    draw_noise: &mut dyn FnMut(&mut [f64]),
    record_states: bool,
) -> Result<ChainTrace> {
    params.validate()?;
    check_start(body, x0)?;
    let blowup_limit = BLOWUP_FACTOR * body.bounding_radius();

    let mut trace = ChainTrace::new(record_states, params.steps + 1);
    let mut x = x0.to_vec();
    trace.record(&x, fhat(&x), f_true.map(|f| f(&x)), true, record_states);

    let mut p = vec![0.0; body.dim()];
    for _ in 0..params.steps {
        let g = grad(&x);
        let drift = params.eta * norm(&g);
        if !(drift <= blowup_limit) {
            return Err(Error::StepBlowUp { norm: drift, limit: blowup_limit });
        }
        draw_noise(&mut p);
        let (next, accepted) = sgld_step(body, &x, &g, &p, params);
        if !accepted {
            trace.stats.geometry_rejects += 1;
        }
        x = next;
        trace.record(&x, fhat(&x), f_true.map(|f| f(&x)), accepted, record_states);
    }
    trace.final_state = x;
    Ok(trace)
}

/// Form of the Metropolis acceptance-ratio exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RatioExponent {
    /// Log-ratio of the Gaussian proposal densities, `||.||^2 * xi / (4 eta)`,
    /// together with `xi * (ftilde(x) - ftilde(y))`. This is the form under
    /// which the chain is reversible for `exp(-xi * ftilde)`.
    #[default]
    GaussianDensity,
    /// Unsquared distances `||.|| / (4 eta)` and a temperature-free value
    /// difference. Kept for comparison experiments; not reversible for the
    /// stated target.
    AbsoluteDistance,
}

/// Parameters of the lazy Metropolis-adjusted diagnostic chain.
#[derive(Clone, Copy, Debug)]
pub struct MetropolisParams {
    pub xi: f64,
    pub eta: f64,
    pub steps: usize,
    pub step_cap: f64,
    /// Draws used to estimate each side of the acceptance-ratio expectation
    /// when the gradient is stochastic.
    pub ratio_draws: usize,
    pub exponent: RatioExponent,
    /// The gradient closure is deterministic, so the ratio expectations
    /// collapse to single evaluations.
    pub deterministic_gradient: bool,
    /// Test hook: treat every lazy coin as active.
    pub force_active: bool,
    /// Test hook: skip the acceptance test (ratio treated as 1).
    pub force_accept: bool,
}

impl MetropolisParams {
    pub fn new(xi: f64, eta: f64, steps: usize, step_cap: f64) -> Self {
        MetropolisParams {
            xi,
            eta,
            steps,
            step_cap,
            ratio_draws: 32,
            exponent: RatioExponent::GaussianDensity,
            deterministic_gradient: false,
            force_active: false,
            force_accept: false,
        }
    }

    fn sgld(&self) -> SgldParams {
        SgldParams { xi: self.xi, eta: self.eta, steps: self.steps, step_cap: self.step_cap }
    }
}

/// Log acceptance probability for a geometry-feasible move `x -> y` with
/// deterministic gradients `gx`, `gy` and surrogate values `fx`, `fy`.
pub fn metropolis_log_acceptance(
    params: &MetropolisParams,
    x: &[f64],
    y: &[f64],
    gx: &[f64],
    gy: &[f64],
    fx: f64,
    fy: f64,
) -> f64 {
    let fwd: Vec<f64> = y
        .iter()
        .zip(x)
        .zip(gx)
        .map(|((yi, xi), gi)| yi - xi + params.eta * gi)
        .collect();
    let bwd: Vec<f64> = x
        .iter()
        .zip(y)
        .zip(gy)
        .map(|((xi, yi), gi)| xi - yi + params.eta * gi)
        .collect();
    let ln_ratio = match params.exponent {
        RatioExponent::GaussianDensity => {
            let c = params.xi / (4.0 * params.eta);
            params.xi * (fx - fy) + c * (crate::linalg::norm2(&fwd) - crate::linalg::norm2(&bwd))
        }
        RatioExponent::AbsoluteDistance => {
            let c = 1.0 / (4.0 * params.eta);
            (fx - fy) + c * (norm(&fwd) - norm(&bwd))
        }
    };
    ln_ratio.min(0.0)
}

/// Lazy Metropolis-adjusted chain. At each step a fair coin holds the chain;
/// otherwise the shared proposal is drawn, clipped by geometry, and accepted
/// with the configured ratio. The recorded value per state is `ftilde`.
pub fn metropolis_sgld_run(
    body: &ConvexBody,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ftilde: &dyn Fn(&[f64]) -> f64,
    params: &MetropolisParams,
    x0: &[f64],
    streams: &mut ChainStreams,
    record_states: bool,
) -> Result<ChainTrace> {
    params.sgld().validate()?;
    check_start(body, x0)?;
    if params.ratio_draws == 0 {
        return Err(Error::invalid("ratio_draws", "must be positive"));
    }
    let blowup_limit = BLOWUP_FACTOR * body.bounding_radius();
    let sgld_params = params.sgld();

    let mut trace = ChainTrace::new(record_states, params.steps + 1);
    let mut x = x0.to_vec();
    let mut fx = ftilde(&x);
    trace.record(&x, fx, None, true, record_states);

    let mut p = vec![0.0; body.dim()];
    for _ in 0..params.steps {
        let active = params.force_active || streams.coins.bernoulli(0.5);
        if !active {
            trace.stats.lazy_holds += 1;
            trace.record(&x, fx, None, false, record_states);
            continue;
        }
        trace.stats.active_steps += 1;

        let g = grad(&x);
        let drift = params.eta * norm(&g);
        if !(drift <= blowup_limit) {
            return Err(Error::StepBlowUp { norm: drift, limit: blowup_limit });
        }
        streams.noise.fill_gaussian(&mut p);
        let candidate = sgld_propose(&x, &g, &p, &sgld_params);
        if !(body.contains(&candidate) && dist(&candidate, &x) <= params.step_cap) {
            trace.stats.geometry_rejects += 1;
            trace.record(&x, fx, None, false, record_states);
            continue;
        }
        trace.stats.metropolis_considered += 1;

        let fy = ftilde(&candidate);
        let accept = if params.force_accept {
            true
        } else {
            let ln_a = if params.deterministic_gradient {
                let gy = grad(&candidate);
                metropolis_log_acceptance(params, &x, &candidate, &g, &gy, fx, fy)
            } else {
                stochastic_log_acceptance(params, grad, &x, &candidate, fx, fy)
            };
            streams.accept.uniform01().ln() < ln_a
        };
        if accept {
            x = candidate;
            fx = fy;
            trace.record(&x, fx, None, true, record_states);
        } else {
            trace.stats.metropolis_rejects += 1;
            trace.record(&x, fx, None, false, record_states);
        }
    }
    trace.final_state = x;
    Ok(trace)
}

/// Acceptance ratio with the expectation over gradient draws estimated by
/// `ratio_draws` fresh samples on each side, combined in log space.
fn stochastic_log_acceptance(
    params: &MetropolisParams,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    x: &[f64],
    y: &[f64],
    fx: f64,
    fy: f64,
) -> f64 {
    let m = params.ratio_draws;
    let mut fwd_exps = Vec::with_capacity(m);
    let mut bwd_exps = Vec::with_capacity(m);
    for _ in 0..m {
        let gy = grad(y);
        let fwd: Vec<f64> =
            x.iter().zip(y).zip(&gy).map(|((xi, yi), gi)| xi - yi + params.eta * gi).collect();
        let gx = grad(x);
        let bwd: Vec<f64> =
            y.iter().zip(x).zip(&gx).map(|((yi, xi), gi)| yi - xi + params.eta * gi).collect();
        match params.exponent {
            RatioExponent::GaussianDensity => {
                let c = params.xi / (4.0 * params.eta);
                fwd_exps.push(-c * crate::linalg::norm2(&fwd));
                bwd_exps.push(-c * crate::linalg::norm2(&bwd));
            }
            RatioExponent::AbsoluteDistance => {
                let c = 1.0 / (4.0 * params.eta);
                fwd_exps.push(-c * norm(&fwd));
                bwd_exps.push(-c * norm(&bwd));
            }
        }
    }
    let value_term = match params.exponent {
        RatioExponent::GaussianDensity => params.xi * (fx - fy),
        RatioExponent::AbsoluteDistance => fx - fy,
    };
    (value_term + log_sum_exp(&fwd_exps) - log_sum_exp(&bwd_exps)).min(0.0)
}

/// Streams consumed by one Metropolis chain: proposal Gaussians, lazy coins,
/// and acceptance uniforms are split so forcing one source in a test never
/// shifts the others.
#[derive(Clone, Debug)]
pub struct ChainStreams {
    pub noise: Stream,
    pub coins: Stream,
    pub accept: Stream,
}

impl ChainStreams {
    pub fn derive(streams: &Streams, label: &str, epoch: u64, index: u64) -> ChainStreams {
        ChainStreams {
            noise: streams.stream(&format!("{label}.noise"), epoch, index),
            coins: streams.stream(&format!("{label}.coins"), epoch, index),
            accept: streams.stream(&format!("{label}.accept"), epoch, index),
        }
    }
}

/// Result of driving the adjusted and unadjusted chains with shared noise.
#[derive(Clone, Debug)]
pub struct CoupledResult {
    /// The lazy Metropolis chain on its full timeline (holds included).
    pub lazy: ChainTrace,
    /// The unadjusted chain on the full body, one entry per active step.
    pub unadjusted: ChainTrace,
    /// The unadjusted chain on the restricted body.
    pub restricted: ChainTrace,
    /// First active-step index at which any pair of chains disagreed.
    pub first_divergence: Option<usize>,
}

/// Drive three chains from `x0` with shared randomness: the lazy Metropolis
/// chain consumes Gaussians `Q_0, Q_1, ...` at its active steps, and the two
/// unadjusted chains take their i-th step with the Gaussian the lazy chain
/// used at its i-th active step (the lazy time change). Gradients must be
/// deterministic so that coupled states evolve identically until a Metropolis
/// rejection or a membership check splits them.
pub fn coupled_run(
    body: &ConvexBody,
    body_restricted: &ConvexBody,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    ftilde: &dyn Fn(&[f64]) -> f64,
    params: &MetropolisParams,
    x0: &[f64],
    streams: &mut ChainStreams,
    record_states: bool,
) -> Result<CoupledResult> {
    params.sgld().validate()?;
    check_start(body, x0)?;
    check_start(body_restricted, x0)?;
    let sgld_params = params.sgld();
    let active_target = params.steps;

    let mut lazy = ChainTrace::new(record_states, 2 * active_target + 1);
    let mut unadj = ChainTrace::new(record_states, active_target + 1);
    let mut restr = ChainTrace::new(record_states, active_target + 1);

    let mut y = x0.to_vec();
    let mut fy = ftilde(&y);
    let mut x = x0.to_vec();
    let mut xh = x0.to_vec();
    lazy.record(&y, fy, None, true, record_states);
    unadj.record(&x, ftilde(&x), None, true, record_states);
    restr.record(&xh, ftilde(&xh), None, true, record_states);

    let mut first_divergence = None;
    let mut active = 0usize;
    let mut p = vec![0.0; body.dim()];
    // The lazy coin is fair, so ~2x active steps are needed; the guard only
    // prevents a pathological stream from spinning forever.
    let max_lazy_steps = 64 * active_target + 1024;
    let mut lazy_steps = 0usize;
    while active < active_target {
        lazy_steps += 1;
        if lazy_steps > max_lazy_steps {
            return Err(Error::invalid("steps", "lazy coin failed to activate; stream exhausted"));
        }
        let is_active = params.force_active || streams.coins.bernoulli(0.5);
        if !is_active {
            lazy.stats.lazy_holds += 1;
            lazy.record(&y, fy, None, false, record_states);
            continue;
        }
        lazy.stats.active_steps += 1;
        streams.noise.fill_gaussian(&mut p);

        // Lazy Metropolis step for Y.
        let gy = grad(&y);
        let candidate = sgld_propose(&y, &gy, &p, &sgld_params);
        let feasible = body.contains(&candidate) && dist(&candidate, &y) <= params.step_cap;
        if feasible {
            lazy.stats.metropolis_considered += 1;
            let f_cand = ftilde(&candidate);
            let accept = if params.force_accept {
                true
            } else {
                let g_cand = grad(&candidate);
                let ln_a =
                    metropolis_log_acceptance(params, &y, &candidate, &gy, &g_cand, fy, f_cand);
                streams.accept.uniform01().ln() < ln_a
            };
            if accept {
                y = candidate;
                fy = f_cand;
                lazy.record(&y, fy, None, true, record_states);
            } else {
                lazy.stats.metropolis_rejects += 1;
                lazy.record(&y, fy, None, false, record_states);
            }
        } else {
            lazy.stats.geometry_rejects += 1;
            lazy.record(&y, fy, None, false, record_states);
        }

        // Unadjusted steps with the same Gaussian.
        let gx = grad(&x);
        let (nx, ax) = sgld_step(body, &x, &gx, &p, &sgld_params);
        if !ax {
            unadj.stats.geometry_rejects += 1;
        }
        x = nx;
        unadj.record(&x, ftilde(&x), None, ax, record_states);

        let gxh = grad(&xh);
        let (nxh, axh) = sgld_step(body_restricted, &xh, &gxh, &p, &sgld_params);
        if !axh {
            restr.stats.geometry_rejects += 1;
        }
        xh = nxh;
        restr.record(&xh, ftilde(&xh), None, axh, record_states);

        if first_divergence.is_none() && (y != x || x != xh) {
            first_divergence = Some(active);
        }
        active += 1;
    }
    lazy.final_state = y;
    unadj.final_state = x;
    restr.final_state = xh;
    Ok(CoupledResult { lazy, unadjusted: unadj, restricted: restr, first_divergence })
}

/// First index whose recorded state satisfies the predicate. Requires a trace
/// with recorded states.
pub fn hitting_time(states: &[Vec<f64>], pred: &dyn Fn(&[f64]) -> bool) -> Option<usize> {
    states.iter().position(|s| pred(s))
}

/// Streaming writer for the trace CSV schema
/// `epoch,step,accepted,fhat,f_true[,x0..x{d-1}]`, line-feed terminated,
/// locale-independent formatting.
pub struct TraceWriter<W: Write> {
    out: W,
    emit_coords: bool,
    dim: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, dim: usize, emit_coords: bool) -> Result<TraceWriter<W>> {
        let mut header = String::from("epoch,step,accepted,fhat,f_true");
        if emit_coords {
            for j in 0..dim {
                header.push_str(&format!(",x{j}"));
            }
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        Ok(TraceWriter { out, emit_coords, dim })
    }

    pub fn row(
        &mut self,
        epoch: usize,
        step: usize,
        accepted: bool,
        fhat: f64,
        f_true: Option<f64>,
        coords: &[f64],
    ) -> Result<()> {
        let mut line = format!("{epoch},{step},{accepted},{fhat},");
        if let Some(t) = f_true {
            line.push_str(&format!("{t}"));
        }
        if self.emit_coords {
            debug_assert_eq!(coords.len(), self.dim);
            for c in coords {
                line.push_str(&format!(",{c}"));
            }
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
