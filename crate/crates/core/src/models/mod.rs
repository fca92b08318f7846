//! Generative models with priors, simulators and summary statistics.

use std::sync::Arc;

use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{AbcError, Result};

pub mod boom_bust;
pub mod cell;
pub mod gaussian_toy;
pub mod gk;
pub mod twisted;
pub mod two_moons;

pub use boom_bust::{BoomBust, BoomBustParams};
pub use cell::{CellModel, CellParams};
pub use gaussian_toy::{GaussianToy, GaussianToyParams};
pub use gk::{gk_quantile, GkHierarchical, GkParams};
pub use twisted::{Twisted, TwistedParams};
pub use two_moons::{TwoMoons, TwoMoonsParams};

/// A simulator-based model: prior, forward simulator and summary function.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    fn d_theta(&self) -> usize;
    fn d_s(&self) -> usize;
    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64>;
    /// Log prior density, possibly unnormalized; `-inf` outside the support.
    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64;
    /// Raw simulated dataset, flattened.
    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64>;
    fn summarize(&self, data: &[f64]) -> DVector<f64>;
    /// Summaries of the observed dataset.
    fn observed_summaries(&self) -> DVector<f64>;

    fn simulate_summaries(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        self.summarize(&self.simulate(theta, rng))
    }

    /// Parameter used to generate the observed data, when there is one.
    fn true_theta(&self) -> Option<DVector<f64>> {
        None
    }
}

/// Scaled Euclidean distance `sqrt(sum(((s_j - y_j) / scale_j)^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    scale: Vec<f64>,
}

impl Distance {
    pub fn unscaled(d_s: usize) -> Self {
        Self { scale: vec![1.0; d_s] }
    }

    pub fn with_scale(scale: Vec<f64>) -> Result<Self> {
        if let Some(bad) = scale.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(AbcError::InvalidParameter(format!("distance scale must be positive, got {bad}")));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn distance(&self, s: &DVector<f64>, s_y: &DVector<f64>) -> f64 {
        s.iter()
            .zip(s_y.iter())
            .zip(&self.scale)
            .map(|((a, b), c)| ((a - b) / c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A model together with its observed summaries and distance.
#[derive(Clone)]
pub struct Problem {
    pub model: Arc<dyn Model>,
    pub observed: DVector<f64>,
    pub distance: Distance,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("model", &self.model.name())
            .field("observed", &self.observed)
            .field("distance", &self.distance)
            .finish()
    }
}

impl Problem {
    pub fn new(model: Arc<dyn Model>, distance: Distance) -> Result<Self> {
        let observed = model.observed_summaries();
        if distance.scale().len() != model.d_s() || observed.len() != model.d_s() {
            return Err(AbcError::DimensionMismatch(format!(
                "model has {} summaries, distance scale {} and observed {}",
                model.d_s(),
                distance.scale().len(),
                observed.len()
            )));
        }
        Ok(Self {
            model,
            observed,
            distance,
        })
    }

    pub fn unscaled(model: Arc<dyn Model>) -> Self {
        let d = Distance::unscaled(model.d_s());
        Self::new(model, d).expect("dimensions agree by construction")
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median absolute deviation of each column; zero deviations become 1.
pub fn mad_scale(summaries: &[DVector<f64>]) -> Vec<f64> {
    let d = summaries.first().map_or(0, |s| s.len());
    (0..d)
        .map(|j| {
            let mut col: Vec<f64> = summaries.iter().map(|s| s[j]).collect();
            let m = median(&mut col);
            let mut dev: Vec<f64> = col.iter().map(|v| (v - m).abs()).collect();
            let mad = median(&mut dev);
            if mad > 0.0 && mad.is_finite() {
                mad
            } else {
                1.0
            }
        })
        .collect()
}

/// MAD scale of `n` prior-predictive summaries. Simulation `i` uses its own
/// random stream, so the result does not depend on the thread count.
pub fn mad_calibrate(model: &dyn Model, n: usize, seed: u64) -> Result<Distance> {
    if n < 2 {
        return Err(AbcError::InvalidParameter("MAD calibration needs at least 2 simulations".into()));
    }
    let sims: Vec<DVector<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, u64::MAX, i);
            let theta = model.prior_sample(&mut r);
            model.simulate_summaries(&theta, &mut r)
        })
        .collect();
    Distance::with_scale(mad_scale(&sims))
}

/// Model selection and parameters, as read from a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    TwoMoons(TwoMoonsParams),
    Twisted(TwistedParams),
    GkHierarchical(GkParams),
    BoomBust(BoomBustParams),
    Cell(CellParams),
    GaussianToy(GaussianToyParams),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::TwoMoons(_) => "two_moons",
            ModelConfig::Twisted(_) => "twisted",
            ModelConfig::GkHierarchical(_) => "gk_hierarchical",
            ModelConfig::BoomBust(_) => "boom_bust",
            ModelConfig::Cell(_) => "cell",
            ModelConfig::GaussianToy(_) => "gaussian_toy",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Model>> {
        Ok(match self {
            ModelConfig::TwoMoons(p) => Arc::new(TwoMoons::new(p.clone())?),
            ModelConfig::Twisted(p) => Arc::new(Twisted::new(p.clone())?),
            ModelConfig::GkHierarchical(p) => Arc::new(GkHierarchical::new(p.clone())?),
            ModelConfig::BoomBust(p) => Arc::new(BoomBust::new(p.clone())?),
            ModelConfig::Cell(p) => Arc::new(CellModel::new(p.clone())?),
            ModelConfig::GaussianToy(p) => Arc::new(GaussianToy::new(p.clone())?),
        })
    }

    /// Number of prior-predictive simulations used for MAD scaling by default
    /// (0 means an unscaled distance).
    pub fn default_mad_sims(&self) -> usize {
        match self {
            ModelConfig::BoomBust(_) => 5000,
            ModelConfig::Cell(_) => 10_000,
            _ => 0,
        }
    }
}

pub(crate) fn check_observed(observed: &[f64], d_s: usize) -> Result<()> {
    if observed.len() != d_s {
        return Err(AbcError::DimensionMismatch(format!(
            "observed summaries have length {}, model expects {d_s}",
            observed.len()
        )));
    }
    Ok(())
}
