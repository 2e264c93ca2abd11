//! Global minimization of convex functions observed only through noisy
//! oracles.
//!
//! The oracle model allows both multiplicative and additive corruption:
//! `Fhat(x) = F(x)(1 + psi(x)) + phi(x)` with `|psi| <= alpha`,
//! `|phi| <= beta`, and `F` convex with minimum value zero on a rounded
//! convex body. Because the corruption need not be smooth, or even
//! continuous, the solver never differentiates `Fhat` directly: it runs
//! projected stochastic gradient Langevin dynamics on a Gaussian smoothing of
//! the oracle, and anneals the inverse temperature over epochs so that early
//! epochs hop between the spurious local minima the noise creates while late
//! epochs concentrate near the true minimizer.
//!
//! The crate is organized along the pipeline:
//!
//! * [`geometry`]: rounded convex bodies, membership, and uniform sampling.
//! * [`objective`]: ground-truth convex test objectives.
//! * [`noise`]: deterministic band-limited corruptions and the oracle type.
//! * [`smoothing`]: the Gaussian surrogate and its gradient estimator.
//! * [`chains`]: the Langevin chains (plain, Metropolis-adjusted, coupled).
//! * [`annealing`]: temperature/step-size schedules and the epoch driver.
//! * [`diagnostics`]: grid measures, conductance estimates, escape and
//!   stationarity experiments that validate the chain-level guarantees at
//!   desk scale.
//! * [`config`] and [`cli`]: the run-configuration format and the
//!   command-line front end.
//!
//! Determinism is a hard guarantee: every random draw comes from a named
//! sub-stream of one master seed ([`rng`]), so identical configurations and
//! seeds reproduce identical traces byte for byte.

pub mod annealing;
pub mod chains;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod noise;
pub mod objective;
pub mod rng;
pub mod smoothing;

pub use error::{Error, Result};
