use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_observed, Model};
use crate::distributions::{std_normal_inv_cdf, std_normal_logpdf};
use crate::rng::StreamRng;
use crate::{AbcError, Result};

/// g-and-k quantile function evaluated at a standard-normal quantile `r`.
pub fn gk_from_normal(r: f64, a: f64, b: f64, g: f64, k: f64, c: f64) -> f64 {
    a + b * (1.0 + c * (0.5 * g * r).tanh()) * (1.0 + r * r).powf(k) * r
}

/// g-and-k quantile `F^-1(z)`.
pub fn gk_quantile(z: f64, a: f64, b: f64, g: f64, k: f64, c: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(AbcError::Domain(format!("g-and-k quantile level {z} outside (0, 1)")));
    }
    if !(b > 0.0) || !(k > -0.5) {
        return Err(AbcError::InvalidParameter(format!("g-and-k needs B > 0 and k > -1/2 (B={b}, k={k})")));
    }
    Ok(gk_from_normal(std_normal_inv_cdf(z), a, b, g, k, c))
}

/// Linear-interpolation sample quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GkParams {
    pub n_units: usize,
    pub n_obs: usize,
    pub b: f64,
    pub g: f64,
    pub k: f64,
    pub c: f64,
    pub alpha_true: f64,
    pub data_seed: u64,
}

impl Default for GkParams {
    fn default() -> Self {
        Self {
            n_units: 4,
            n_obs: 100,
            b: 0.192,
            g: 0.622,
            k: 0.438,
            c: 0.8,
            alpha_true: 5.707,
            data_seed: 2024,
        }
    }
}

/// Hierarchical g-and-k: `theta = (alpha, A_1..A_n)`, `A_i ~ N(alpha, 1)`,
/// `x_ij ~ gk(A_i, B, g, k)`, summaries are nine quantiles per unit.
#[derive(Debug, Clone)]
pub struct GkHierarchical {
    p: GkParams,
    true_theta: DVector<f64>,
    observed: DVector<f64>,
}

pub const GK_QUANTILES: usize = 9;

impl GkHierarchical {
    pub fn new(p: GkParams) -> Result<Self> {
        if p.n_units == 0 || p.n_obs < 2 {
            return Err(AbcError::InvalidParameter("g-and-k needs n_units >= 1 and n_obs >= 2".into()));
        }
        gk_quantile(0.5, 0.0, p.b, p.g, p.k, p.c)?;
        let mut model = Self {
            true_theta: DVector::zeros(p.n_units + 1),
            observed: DVector::zeros(0),
            p,
        };
        let mut rng = StreamRng::seed_from_u64(model.p.data_seed);
        let mut theta = DVector::zeros(model.p.n_units + 1);
        theta[0] = model.p.alpha_true;
        for i in 0..model.p.n_units {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta[i + 1] = model.p.alpha_true + z;
        }
        let data = model.simulate(&theta, &mut rng);
        model.observed = model.summarize(&data);
        check_observed(model.observed.as_slice(), model.d_s())?;
        model.true_theta = theta;
        Ok(model)
    }
}

impl Model for GkHierarchical {
    fn name(&self) -> &'static str {
        "gk_hierarchical"
    }

    fn d_theta(&self) -> usize {
        self.p.n_units + 1
    }

    fn d_s(&self) -> usize {
        GK_QUANTILES * self.p.n_units
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        use rand::Rng;
        let alpha = rng.random_range(-10.0..10.0);
        let mut theta = DVector::from_element(self.d_theta(), alpha);
        for i in 1..theta.len() {
            let z: f64 = StandardNormal.sample(&mut *rng);
            theta[i] += z;
        }
        theta
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        let alpha = theta[0];
        if !(-10.0..=10.0).contains(&alpha) {
            return f64::NEG_INFINITY;
        }
        -(20.0f64).ln() + theta.iter().skip(1).map(|a| std_normal_logpdf(a - alpha)).sum::<f64>()
    }

    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let p = &self.p;
        let mut data = Vec::with_capacity(p.n_units * p.n_obs);
        for i in 0..p.n_units {
            let a = theta[i + 1];
            for _ in 0..p.n_obs {
                let r: f64 = StandardNormal.sample(&mut *rng);
                data.push(gk_from_normal(r, a, p.b, p.g, p.k, p.c));
            }
        }
        data
    }

    fn summarize(&self, data: &[f64]) -> DVector<f64> {
        let mut s = Vec::with_capacity(self.d_s());
        for unit in data.chunks(self.p.n_obs) {
            let mut sorted = unit.to_vec();
            sorted.sort_by(f64::total_cmp);
            for l in 0..GK_QUANTILES {
                s.push(sorted_quantile(&sorted, l as f64 / 8.0));
            }
        }
        DVector::from_vec(s)
    }

    fn observed_summaries(&self) -> DVector<f64> {
        self.observed.clone()
    }

    fn true_theta(&self) -> Option<DVector<f64>> {
        Some(self.true_theta.clone())
    }
}
