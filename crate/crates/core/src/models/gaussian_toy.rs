use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::distributions::{std_normal_cdf, std_normal_logpdf};
use crate::{AbcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianToyParams {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub noise_sd: f64,
    pub n_obs: usize,
    /// Observed sample mean of each coordinate; its length sets the dimension.
    pub observed: Vec<f64>,
}

impl Default for GaussianToyParams {
    fn default() -> Self {
        Self {
            prior_mean: 0.0,
            prior_sd: 1.0,
            noise_sd: 1.0,
            n_obs: 10,
            observed: vec![0.8],
        }
    }
}

/// Unknown mean vector of `n_obs` Gaussian draws per coordinate with known
/// variance, summarized by the per-coordinate sample means. In one and two
/// dimensions the ABC posterior under the uniform kernel is available by
/// quadrature.
#[derive(Debug, Clone)]
pub struct GaussianToy {
    p: GaussianToyParams,
}

fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

impl GaussianToy {
    pub fn new(p: GaussianToyParams) -> Result<Self> {
        if !(p.prior_sd > 0.0 && p.noise_sd > 0.0) || p.n_obs == 0 {
            return Err(AbcError::InvalidParameter("gaussian toy needs positive scales and n_obs".into()));
        }
        if p.observed.is_empty() || p.observed.iter().any(|v| !v.is_finite()) {
            return Err(AbcError::InvalidParameter("gaussian toy needs finite observed means".into()));
        }
        Ok(Self { p })
    }

    pub fn dim(&self) -> usize {
        self.p.observed.len()
    }

    pub fn summary_sd(&self) -> f64 {
        self.p.noise_sd / (self.p.n_obs as f64).sqrt()
    }

    fn prior_density_1d(&self, th: f64) -> f64 {
        std_normal_logpdf((th - self.p.prior_mean) / self.p.prior_sd).exp()
    }

    /// Probability that a bivariate `N(0, sn^2 I)` vector shifted by a distance
    /// `rho` lands within `delta` of the origin, tabulated on a `rho` grid.
    fn radial_acceptance(&self, delta: f64, rho_max: f64, n_rho: usize) -> Vec<f64> {
        let sn = self.summary_sd();
        let (n_r, n_phi) = (200, 256);
        let h_r = delta / n_r as f64;
        let h_phi = std::f64::consts::PI / n_phi as f64;
        (0..=n_rho)
            .map(|k| {
                let rho = rho_max * k as f64 / n_rho as f64;
                let mut total = 0.0;
                for i in 0..=n_r {
                    let r = i as f64 * h_r;
                    let mut ring = 0.0;
                    for j in 0..=n_phi {
                        let phi = j as f64 * h_phi;
                        let d2 = r * r + rho * rho - 2.0 * r * rho * phi.cos();
                        ring += simpson_weight(j, n_phi) * (-0.5 * d2 / (sn * sn)).exp();
                    }
                    // Symmetric in phi, so integrate over [0, pi] and double.
                    total += simpson_weight(i, n_r) * r * 2.0 * ring * h_phi / 3.0;
                }
                total * h_r / 3.0 / (2.0 * std::f64::consts::PI * sn * sn)
            })
            .collect()
    }

    /// Per-coordinate mean and variance of the ABC posterior with a uniform
    /// kernel of radius `delta`, for one or two dimensions.
    pub fn abc_posterior_moments(&self, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = &self.p;
        let sn = self.summary_sd();
        let (lo, hi) = (p.prior_mean - 12.0 * p.prior_sd, p.prior_mean + 12.0 * p.prior_sd);
        match self.dim() {
            1 => {
                let n = 40_000;
                let h = (hi - lo) / n as f64;
                let y = p.observed[0];
                let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
                for i in 0..=n {
                    let th = lo + i as f64 * h;
                    let accept = std_normal_cdf((y + delta - th) / sn) - std_normal_cdf((y - delta - th) / sn);
                    let f = simpson_weight(i, n) * self.prior_density_1d(th) * accept;
                    z += f;
                    m1 += f * th;
                    m2 += f * th * th;
                }
                let mean = m1 / z;
                Ok((vec![mean], vec![m2 / z - mean * mean]))
            }
            2 => {
                let n = 1200;
                let h = (hi - lo) / n as f64;
                let rho_max = (hi - lo) * 2f64.sqrt() + p.observed.iter().map(|v| v.abs()).sum::<f64>();
                let n_rho = 4000;
                let table = self.radial_acceptance(delta, rho_max, n_rho);
                let lookup = |rho: f64| -> f64 {
                    let x = rho / rho_max * n_rho as f64;
                    let k = (x.floor() as usize).min(n_rho - 1);
                    let f = x - k as f64;
                    table[k] * (1.0 - f) + table[k + 1] * f
                };
                let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
                let prior: Vec<f64> = grid.iter().map(|&t| self.prior_density_1d(t)).collect();
                let mut z = 0.0;
                let mut m1 = [0.0; 2];
                let mut m2 = [0.0; 2];
                for (i, &a) in grid.iter().enumerate() {
                    for (j, &b) in grid.iter().enumerate() {
                        let rho = ((a - p.observed[0]).powi(2) + (b - p.observed[1]).powi(2)).sqrt();
                        let f = simpson_weight(i, n) * simpson_weight(j, n) * prior[i] * prior[j] * lookup(rho);
                        z += f;
                        m1[0] += f * a;
                        m1[1] += f * b;
                        m2[0] += f * a * a;
                        m2[1] += f * b * b;
                    }
                }
                let mean: Vec<f64> = m1.iter().map(|m| m / z).collect();
                let var = (0..2).map(|k| m2[k] / z - mean[k] * mean[k]).collect();
                Ok((mean, var))
            }
            d => Err(AbcError::InvalidParameter(format!(
                "analytic ABC posterior is only implemented for 1 or 2 dimensions, not {d}"
            ))),
        }
    }

    /// Per-coordinate mean of the ABC posterior with a uniform kernel of radius `delta`.
    pub fn abc_posterior_mean(&self, delta: f64) -> Result<Vec<f64>> {
        Ok(self.abc_posterior_moments(delta)?.0)
    }

    /// Exact (delta -> 0) conjugate posterior mean and variance of each coordinate.
    pub fn exact_posterior(&self) -> (Vec<f64>, f64) {
        let p = &self.p;
        let prec = 1.0 / (p.prior_sd * p.prior_sd) + 1.0 / self.summary_sd().powi(2);
        let means = p
            .observed
            .iter()
            .map(|y| (p.prior_mean / (p.prior_sd * p.prior_sd) + y / self.summary_sd().powi(2)) / prec)
            .collect();
        (means, 1.0 / prec)
    }
}

impl Model for GaussianToy {
    fn name(&self) -> &'static str {
        "gaussian_toy"
    }

    fn d_theta(&self) -> usize {
        self.dim()
    }

    fn d_s(&self) -> usize {
        self.dim()
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(self.dim(), |_, _| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            self.p.prior_mean + self.p.prior_sd * z
        })
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        theta
            .iter()
            .map(|t| std_normal_logpdf((t - self.p.prior_mean) / self.p.prior_sd) - self.p.prior_sd.ln())
            .sum()
    }

    /// `n_obs` draws for each coordinate, coordinate-major.
    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() * self.p.n_obs);
        for t in theta.iter() {
            for _ in 0..self.p.n_obs {
                let z: f64 = StandardNormal.sample(&mut *rng);
                out.push(t + self.p.noise_sd * z);
            }
        }
        out
    }

    fn summarize(&self, data: &[f64]) -> DVector<f64> {
        let n = self.p.n_obs;
        DVector::from_iterator(
            self.dim(),
            data.chunks(n).map(|c| c.iter().sum::<f64>() / n as f64),
        )
    }

    fn observed_summaries(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.p.observed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn small_delta_approaches_conjugate_posterior() {
        let m = GaussianToy::new(GaussianToyParams::default()).unwrap();
        let (mean, var) = m.exact_posterior();
        let (am, av) = m.abc_posterior_moments(1e-4).unwrap();
        assert!((am[0] - mean[0]).abs() < 1e-6);
        assert!((av[0] - var).abs() < 1e-6);
        // A huge tolerance returns the prior.
        assert!(m.abc_posterior_mean(100.0).unwrap()[0].abs() < 1e-9);
    }

    #[test]
    fn radial_table_limits() {
        let m = GaussianToy::new(GaussianToyParams {
            observed: vec![0.8, -0.3],
            ..GaussianToyParams::default()
        })
        .unwrap();
        let sn = m.summary_sd();
        // At rho = 0 the probability is the Rayleigh CDF 1 - exp(-delta^2 / (2 sn^2)).
        let t = m.radial_acceptance(0.3, 1.0, 10);
        assert!((t[0] - (1.0 - (-0.09 / (2.0 * sn * sn)).exp())).abs() < 1e-9);
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn two_dimensional_posterior_is_consistent() {
        let m = GaussianToy::new(GaussianToyParams {
            observed: vec![0.8, -0.3],
            ..GaussianToyParams::default()
        })
        .unwrap();
        let (exact, var) = m.exact_posterior();
        let (mean, v) = m.abc_posterior_moments(0.01).unwrap();
        for k in 0..2 {
            assert!((mean[k] - exact[k]).abs() < 1e-4, "{mean:?} vs {exact:?}");
            assert!((v[k] - var).abs() < 1e-4);
        }
        // Monte Carlo ABC rejection oracle at a moderate radius.
        let delta = 0.4;
        let (mean, _) = m.abc_posterior_moments(delta).unwrap();
        let (mut acc, mut sum) = (0usize, [0.0; 2]);
        for c in 0..400_000u64 {
            let mut r = stream(11, 0, c);
            let th = m.prior_sample(&mut r);
            let s = m.simulate_summaries(&th, &mut r);
            if (s - m.observed_summaries()).norm() < delta {
                acc += 1;
                sum[0] += th[0];
                sum[1] += th[1];
            }
        }
        for k in 0..2 {
            let mc = sum[k] / acc as f64;
            assert!((mc - mean[k]).abs() < 4.0 * (0.2 / acc as f64).sqrt(), "{mc} vs {}", mean[k]);
        }
    }

    #[test]
    fn higher_dimensions_sample_but_have_no_oracle() {
        let m = GaussianToy::new(GaussianToyParams {
            observed: vec![0.0; 3],
            ..GaussianToyParams::default()
        })
        .unwrap();
        assert_eq!(m.d_s(), 3);
        assert!(m.abc_posterior_mean(0.1).is_err());
    }
}
