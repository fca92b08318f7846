use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_observed, Model};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoMoonsParams {
    pub observed: Vec<f64>,
}

impl Default for TwoMoonsParams {
    fn default() -> Self {
        Self { observed: vec![0.0, 0.0] }
    }
}

/// Two-moons model with a `U(-1, 1)^2` prior; summaries are the data.
#[derive(Debug, Clone)]
pub struct TwoMoons {
    observed: DVector<f64>,
}

impl TwoMoons {
    pub fn new(params: TwoMoonsParams) -> Result<Self> {
        check_observed(&params.observed, 2)?;
        Ok(Self {
            observed: DVector::from_vec(params.observed),
        })
    }

    /// The generative map for given angle `a` and radius `r`.
    pub fn transform(theta: &DVector<f64>, a: f64, r: f64) -> [f64; 2] {
        let p = [r * a.cos() + 0.25, r * a.sin()];
        [
            p[0] - (theta[0] + theta[1]).abs() * FRAC_1_SQRT_2,
            p[1] + (theta[1] - theta[0]) * FRAC_1_SQRT_2,
        ]
    }
}

impl Model for TwoMoons {
    fn name(&self) -> &'static str {
        "two_moons"
    }

    fn d_theta(&self) -> usize {
        2
    }

    fn d_s(&self) -> usize {
        2
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        if theta.iter().all(|v| (-1.0..=1.0).contains(v)) {
            0.25f64.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let a = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let r = Normal::new(0.1, 0.01).expect("valid").sample(rng);
        Self::transform(theta, a, r).to_vec()
    }

    fn summarize(&self, data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn observed_summaries(&self) -> DVector<f64> {
        self.observed.clone()
    }
}
