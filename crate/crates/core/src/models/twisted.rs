use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_observed, Model};
use crate::{AbcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwistedParams {
    pub b: f64,
    /// Observation variance (the diagonal of the noise covariance).
    pub sigma0: f64,
    pub dim: usize,
    pub observed: Option<Vec<f64>>,
}

impl Default for TwistedParams {
    fn default() -> Self {
        Self {
            b: 0.1,
            sigma0: 1.0,
            dim: 5,
            observed: None,
        }
    }
}

/// Gaussian observations `y ~ N(theta, sigma0 I)` under the twisted-normal
/// ("banana") prior. Summaries are the observations.
#[derive(Debug, Clone)]
pub struct Twisted {
    b: f64,
    sd: f64,
    dim: usize,
    observed: DVector<f64>,
}

impl Twisted {
    pub fn new(params: TwistedParams) -> Result<Self> {
        if params.dim < 2 {
            return Err(AbcError::InvalidParameter("twisted model needs dim >= 2".into()));
        }
        if !(params.sigma0 > 0.0) {
            return Err(AbcError::InvalidParameter("twisted sigma0 must be positive".into()));
        }
        let observed = params.observed.unwrap_or_else(|| {
            let mut y = vec![0.0; params.dim];
            y[0] = 10.0;
            y
        });
        check_observed(&observed, params.dim)?;
        Ok(Self {
            b: params.b,
            sd: params.sigma0.sqrt(),
            dim: params.dim,
            observed: DVector::from_vec(observed),
        })
    }
}

impl Model for Twisted {
    fn name(&self) -> &'static str {
        "twisted"
    }

    fn d_theta(&self) -> usize {
        self.dim
    }

    fn d_s(&self) -> usize {
        self.dim
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let mut theta = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut *rng));
        theta[0] *= 10.0;
        theta[1] += self.b * theta[0] * theta[0] - 100.0 * self.b;
        theta
    }

    /// Unnormalized: `-t1^2/200 - (t2 - b t1^2 + 100 b)^2 / 2 - sum_{j>=3} tj^2`.
    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        let t1 = theta[0];
        let u = theta[1] - self.b * t1 * t1 + 100.0 * self.b;
        -t1 * t1 / 200.0 - 0.5 * u * u - theta.iter().skip(2).map(|v| v * v).sum::<f64>()
    }

    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        theta
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                m + self.sd * z
            })
            .collect()
    }

    fn summarize(&self, data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn observed_summaries(&self) -> DVector<f64> {
        self.observed.clone()
    }
}
