use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{check_observed, Model};
use crate::rng::StreamRng;
use crate::{AbcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoomBustParams {
    /// `(r, kappa, alpha, beta)` used to generate the observed series.
    pub true_theta: Vec<f64>,
    pub n_initial: u64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub data_seed: u64,
}

impl Default for BoomBustParams {
    fn default() -> Self {
        Self {
            true_theta: vec![0.4, 50.0, 0.09, 0.05],
            n_initial: 10,
            n_steps: 300,
            burn_in: 50,
            data_seed: 2024,
        }
    }
}

/// Recruitment boom-and-bust population model with twelve moment summaries.
#[derive(Debug, Clone)]
pub struct BoomBust {
    p: BoomBustParams,
    observed: DVector<f64>,
}

fn poisson(lambda: f64, rng: &mut dyn RngCore) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
}

/// Mean, unbiased variance, skewness `m3 / m2^1.5` and kurtosis `m4 / m2^2`
/// (central moments with divisor n; 0 when `m2 = 0`).
pub fn moment_summaries(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let var = if x.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 > 0.0 {
        [mean, var, m3 / m2.powf(1.5), m4 / (m2 * m2)]
    } else {
        [mean, var, 0.0, 0.0]
    }
}

impl BoomBust {
    pub fn new(p: BoomBustParams) -> Result<Self> {
        if p.burn_in >= p.n_steps || p.n_steps - p.burn_in < 3 {
            return Err(AbcError::InvalidParameter("boom-bust needs at least 3 retained steps".into()));
        }
        check_observed(&p.true_theta, 4)?;
        let mut model = Self {
            p,
            observed: DVector::zeros(12),
        };
        let truth = DVector::from_row_slice(&model.p.true_theta);
        if !model.prior_logpdf(&truth).is_finite() {
            return Err(AbcError::InvalidParameter("boom-bust true parameters outside the prior".into()));
        }
        let mut rng = StreamRng::seed_from_u64(model.p.data_seed);
        let y = model.simulate(&truth, &mut rng);
        model.observed = model.summarize(&y);
        Ok(model)
    }

    pub fn step(theta: &DVector<f64>, n: u64, rng: &mut dyn RngCore) -> u64 {
        let (r, kappa, alpha, beta) = (theta[0], theta[1], theta[2], theta[3]);
        let base = if n as f64 <= kappa {
            poisson(n as f64 * (1.0 + r), rng)
        } else {
            Binomial::new(n, alpha.clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
        };
        base + poisson(beta, rng)
    }
}

impl Model for BoomBust {
    fn name(&self) -> &'static str {
        "boom_bust"
    }

    fn d_theta(&self) -> usize {
        4
    }

    fn d_s(&self) -> usize {
        12
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_row_slice(&[
            rng.random_range(0.0..1.0),
            rng.random_range(10.0..80.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ])
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if unit(theta[0]) && (10.0..=80.0).contains(&theta[1]) && unit(theta[2]) && unit(theta[3]) {
            -(70.0f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// The series `N_1..N_{n_steps}` with the first `burn_in` values dropped.
    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut n = self.p.n_initial;
        let mut out = Vec::with_capacity(self.p.n_steps - self.p.burn_in);
        for t in 0..self.p.n_steps {
            if t >= self.p.burn_in {
                out.push(n as f64);
            }
            n = Self::step(theta, n, rng);
        }
        out
    }

    fn summarize(&self, y: &[f64]) -> DVector<f64> {
        let diff: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let ratio: Vec<f64> = y.windows(2).map(|w| (w[1] + 1.0) / (w[0] + 1.0)).collect();
        let mut s = Vec::with_capacity(12);
        for series in [y, &diff[..], &ratio[..]] {
            s.extend_from_slice(&moment_summaries(series));
        }
        DVector::from_vec(s)
    }

    fn observed_summaries(&self) -> DVector<f64> {
        self.observed.clone()
    }

    fn true_theta(&self) -> Option<DVector<f64>> {
        Some(DVector::from_row_slice(&self.p.true_theta))
    }
}
