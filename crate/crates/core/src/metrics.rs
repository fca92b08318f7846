//! Posterior diagnostics: exact Wasserstein-1 between equal-size samples and
//! weighted posterior summaries.

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::engine::{resample_indices, ParticleSystem};
use crate::{AbcError, Result};

/// Largest sample size accepted by [`wasserstein1`].
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

/// Default number of equally weighted draws used when comparing posteriors.
pub const DEFAULT_COMPARE_SIZE: usize = 256;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns `assignment[row] = column`.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

fn euclid(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

/// Exact Wasserstein-1 distance between two uniformly weighted samples of
/// equal size under the Euclidean metric.
pub fn wasserstein1(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    let m = a.len();
    if m != b.len() {
        return Err(AbcError::DimensionMismatch(format!("samples of size {m} and {}", b.len())));
    }
    if m == 0 {
        return Err(AbcError::InvalidParameter("empty samples".into()));
    }
    if m > MAX_ASSIGNMENT_SIZE {
        return Err(AbcError::SizeCap {
            size: m,
            cap: MAX_ASSIGNMENT_SIZE,
        });
    }
    if a.iter().chain(b).any(|x| x.len() != a[0].len()) {
        return Err(AbcError::DimensionMismatch("points have different dimensions".into()));
    }
    let cost: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| euclid(x, y)).collect()).collect();
    let assign = assignment(&cost);
    Ok(assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / m as f64)
}

/// Resamples both weighted systems to `m` equally weighted draws and
/// returns their Wasserstein-1 distance.
pub fn wasserstein1_systems(a: &ParticleSystem, b: &ParticleSystem, m: usize, rng: &mut dyn RngCore) -> Result<f64> {
    let draw = |s: &ParticleSystem, rng: &mut dyn RngCore| -> Vec<DVector<f64>> {
        resample_indices(&s.weights, m, rng).into_iter().map(|i| s.thetas[i].clone()).collect()
    };
    let xa = draw(a, rng);
    let xb = draw(b, rng);
    wasserstein1(&xa, &xb)
}

pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    /// `quantiles[k][q]` is coordinate `k` at probability `SUMMARY_PROBS[q]`.
    pub quantiles: Vec<[f64; 5]>,
}

/// Weighted quantile: the first sorted value whose cumulative weight reaches `p`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i] / total;
        if acc >= p - 1e-12 {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty")]
}

pub fn posterior_summary(system: &ParticleSystem) -> PosteriorSummary {
    let d = system.d_theta();
    let mean = system.posterior_mean().as_slice().to_vec();
    let quantiles = (0..d)
        .map(|k| {
            let col: Vec<f64> = system.thetas.iter().map(|t| t[k]).collect();
            SUMMARY_PROBS.map(|p| weighted_quantile(&col, &system.weights, p))
        })
        .collect();
    PosteriorSummary { mean, quantiles }
}
