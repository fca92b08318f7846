//! Sequential approximate Bayesian computation with guided proposal samplers.
//!
//! Two samplers are provided by [`engine::run`]: sequential importance
//! sampling ABC, where every iteration draws from one global proposal, and
//! sequential Monte Carlo ABC, where each proposal perturbs a resampled
//! particle from the previous iteration. The proposal catalog lives in
//! [`proposals`]; "guided" proposals condition a Gaussian (or copula) fitted to
//! the joint `(theta, s)` particle cloud on the observed summaries.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod copulas;
pub mod distributions;
pub mod engine;
mod error;
pub mod metrics;
pub mod models;
pub mod output;
pub mod proposals;
pub mod rng;
pub mod stats;

pub use error::{AbcError, Result};

pub use engine::{run, IterationReport, ParticleSystem, RunOutput, RunSettings, StopReason, ThresholdSchedule};
pub use models::{Distance, Model, Problem};
pub use proposals::{ProposalKind, ProposalSpec};
