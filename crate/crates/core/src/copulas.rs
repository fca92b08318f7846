//! Gaussian and t copulas, and proposals built from a copula plus
//! moment-matched marginals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{
    params_from_moments, std_normal_cdf, std_normal_inv_cdf, t_cdf_1d, t_inv_cdf_1d, t_logpdf_1d, MarginalFamily,
    MarginalKind, DEFAULT_DOF,
};
use crate::stats::{correlation_from_covariance, ensure_positive_definite};
use crate::{AbcError, Result};

/// Uniform draws are kept inside `[U_CLAMP, 1 - U_CLAMP]`.
pub const U_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaKind {
    Gaussian,
    #[serde(alias = "student_t")]
    T,
}

#[derive(Debug, Clone)]
pub struct CopulaSpec {
    kind: CopulaKind,
    r: DMatrix<f64>,
    nu: f64,
    chol_l: DMatrix<f64>,
    log_det: f64,
}

impl CopulaSpec {
    /// Repairs `r` to positive definite and rescales it back to a unit diagonal.
    pub fn new(kind: CopulaKind, r: &DMatrix<f64>, nu: f64) -> Result<Self> {
        if kind == CopulaKind::T && !(nu > 0.0 && nu.is_finite()) {
            return Err(AbcError::InvalidDof(nu));
        }
        let (repaired, _) = ensure_positive_definite(r)?;
        let d = repaired.nrows();
        let inv_sd: Vec<f64> = (0..d).map(|i| 1.0 / repaired[(i, i)].sqrt()).collect();
        let mut unit = DMatrix::from_fn(d, d, |i, j| repaired[(i, j)] * inv_sd[i] * inv_sd[j]);
        for i in 0..d {
            unit[(i, i)] = 1.0;
        }
        let (unit, chol) = ensure_positive_definite(&unit)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            kind,
            r: unit,
            nu,
            chol_l,
            log_det,
        })
    }

    pub fn kind(&self) -> CopulaKind {
        self.kind
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// Draws the latent vector (`N(0, R)` or `t(nu, 0, R)`).
    fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let x = &self.chol_l * z;
        match self.kind {
            CopulaKind::Gaussian => x,
            CopulaKind::T => {
                let w: f64 = ChiSquared::new(self.nu).expect("nu validated").sample(rng);
                x * (self.nu / w).sqrt()
            }
        }
    }

    fn latent_cdf(&self, x: f64) -> f64 {
        match self.kind {
            CopulaKind::Gaussian => std_normal_cdf(x),
            CopulaKind::T => t_cdf_1d(self.nu, x),
        }
    }

    pub fn sample_u<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_latent(rng)
            .map(|x| self.latent_cdf(x).clamp(U_CLAMP, 1.0 - U_CLAMP))
    }

    /// Copula log density given latent scores (`Phi^-1(u)` or `F_{t,nu}^-1(u)`).
    pub fn logdensity_from_scores(&self, scores: &DVector<f64>) -> f64 {
        let mut y = scores.clone();
        if !self.chol_l.solve_lower_triangular_mut(&mut y) {
            return f64::NEG_INFINITY;
        }
        let q = y.norm_squared();
        match self.kind {
            CopulaKind::Gaussian => -0.5 * self.log_det - 0.5 * (q - scores.norm_squared()),
            CopulaKind::T => {
                let d = self.dim() as f64;
                let nu = self.nu;
                let joint = ln_gamma(0.5 * (nu + d)) - ln_gamma(0.5 * nu) - 0.5 * d * (nu * std::f64::consts::PI).ln()
                    - 0.5 * self.log_det
                    - 0.5 * (nu + d) * (q / nu).ln_1p();
                joint - scores.iter().map(|&x| t_logpdf_1d(nu, x)).sum::<f64>()
            }
        }
    }

    pub fn logdensity(&self, u: &DVector<f64>) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(AbcError::DimensionMismatch(format!(
                "copula of dimension {} evaluated at {} coordinates",
                self.dim(),
                u.len()
            )));
        }
        if let Some(bad) = u.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(AbcError::Domain(format!("copula argument {bad} outside (0, 1)")));
        }
        let scores = match self.kind {
            CopulaKind::Gaussian => u.map(std_normal_inv_cdf),
            CopulaKind::T => u.map(|v| t_inv_cdf_1d(self.nu, v)),
        };
        Ok(self.logdensity_from_scores(&scores))
    }
}

pub fn copula_sample_u<R: Rng + ?Sized>(c: &CopulaSpec, rng: &mut R) -> DVector<f64> {
    c.sample_u(rng)
}

pub fn copula_logdensity(c: &CopulaSpec, u: &DVector<f64>) -> Result<f64> {
    c.logdensity(u)
}

/// A copula joined with per-coordinate marginals that reproduce a target mean
/// vector and the diagonal of a target covariance.
#[derive(Debug, Clone)]
pub struct CopulaProposal {
    copula: CopulaSpec,
    marginals: Vec<MarginalFamily>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl CopulaProposal {
    pub fn from_moments(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        kind: CopulaKind,
        marginal: MarginalKind,
        nu: Option<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(AbcError::DimensionMismatch("copula moments: mean and covariance disagree".into()));
        }
        let marginals = (0..d)
            .map(|j| {
                if !(cov[(j, j)] > 0.0) {
                    return Err(AbcError::ZeroVariance(j));
                }
                params_from_moments(marginal, mean[j], cov[(j, j)], nu)
            })
            .collect::<Result<Vec<_>>>()?;
        let r = correlation_from_covariance(cov)?;
        let copula = CopulaSpec::new(kind, &r, nu.unwrap_or(DEFAULT_DOF))?;
        Ok(Self {
            copula,
            marginals,
            mean: mean.clone(),
            cov: cov.clone(),
        })
    }

    pub fn copula(&self) -> &CopulaSpec {
        &self.copula
    }

    pub fn marginals(&self) -> &[MarginalFamily] {
        &self.marginals
    }

    pub fn source_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn source_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = self.copula.sample_u(rng);
        DVector::from_iterator(u.len(), u.iter().zip(&self.marginals).map(|(&u, f)| f.inv_cdf(u)))
    }

    pub fn logpdf(&self, theta: &DVector<f64>) -> f64 {
        let mut marg = 0.0;
        for (f, &x) in self.marginals.iter().zip(theta.iter()) {
            let lp = f.logpdf(x);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            marg += lp;
        }
        let scores = match self.copula.kind {
            CopulaKind::Gaussian => {
                DVector::from_iterator(theta.len(), self.marginals.iter().zip(theta.iter()).map(|(f, &x)| f.normal_score(x)))
            }
            CopulaKind::T => DVector::from_iterator(
                theta.len(),
                self.marginals
                    .iter()
                    .zip(theta.iter())
                    .map(|(f, &x)| f.t_score(self.copula.nu, x)),
            ),
        };
        self.copula.logdensity_from_scores(&scores) + marg
    }
}

pub fn proposal_from_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    kind: CopulaKind,
    marginal: MarginalKind,
    nu: Option<f64>,
) -> Result<CopulaProposal> {
    CopulaProposal::from_moments(mean, cov, kind, marginal, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::MvGaussian;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn corr(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    #[test]
    fn gaussian_density_at_centre() {
        let c = CopulaSpec::new(CopulaKind::Gaussian, &corr(0.5), 5.0).unwrap();
        let v = c.logdensity(&DVector::from_element(2, 0.5)).unwrap();
        assert_relative_eq!(v, -0.5 * 0.75f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(v.exp(), 1.1547, epsilon = 1e-4);
    }

    #[test]
    fn independence_copula_is_flat() {
        let c = CopulaSpec::new(CopulaKind::Gaussian, &DMatrix::identity(3, 3), 5.0).unwrap();
        for u in [[0.1, 0.5, 0.9], [0.01, 0.3, 0.7]] {
            assert_relative_eq!(c.logdensity(&DVector::from_row_slice(&u)).unwrap(), 0.0, epsilon = 1e-12);
        }
        let t1 = CopulaSpec::new(CopulaKind::T, &DMatrix::identity(1, 1), 4.0).unwrap();
        for u in [0.02, 0.5, 0.97] {
            assert_relative_eq!(t1.logdensity(&DVector::from_element(1, u)).unwrap(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn domain_error_outside_unit_cube() {
        let c = CopulaSpec::new(CopulaKind::Gaussian, &corr(0.2), 5.0).unwrap();
        assert!(matches!(
            c.logdensity(&DVector::from_row_slice(&[0.0, 0.5])),
            Err(AbcError::Domain(_))
        ));
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn margins_are_uniform() {
        let n = 10_000;
        // KS critical value at alpha = 0.01
        let crit = 1.628 / (n as f64).sqrt();
        for kind in [CopulaKind::Gaussian, CopulaKind::T] {
            for r in [DMatrix::identity(2, 2), corr(0.7)] {
                let c = CopulaSpec::new(kind, &r, 5.0).unwrap();
                let mut g = rng(3);
                let draws: Vec<_> = (0..n).map(|_| c.sample_u(&mut g)).collect();
                for j in 0..2 {
                    let d = ks_uniform(draws.iter().map(|u| u[j]).collect());
                    assert!(d < crit, "{kind:?} margin {j}: KS {d}");
                }
            }
        }
    }

    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
        let mut r = vec![0.0; xs.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn strong_correlation_gives_positive_spearman() {
        for kind in [CopulaKind::Gaussian, CopulaKind::T] {
            let c = CopulaSpec::new(kind, &corr(0.9), 5.0).unwrap();
            let mut g = rng(9);
            let draws: Vec<_> = (0..10_000).map(|_| c.sample_u(&mut g)).collect();
            let a = ranks(&draws.iter().map(|u| u[0]).collect::<Vec<_>>());
            let b = ranks(&draws.iter().map(|u| u[1]).collect::<Vec<_>>());
            let n = a.len() as f64;
            let m = (n - 1.0) / 2.0;
            let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - m) * (y - m)).sum();
            let var: f64 = a.iter().map(|x| (x - m).powi(2)).sum();
            assert!(cov / var > 0.5, "{kind:?}: spearman {}", cov / var);
        }
    }

    #[test]
    fn gaussian_normal_proposal_is_the_mvn() {
        let m = DVector::from_row_slice(&[0.5, -1.0, 2.0]);
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.5]);
        let p = CopulaProposal::from_moments(&m, &s, CopulaKind::Gaussian, MarginalKind::Normal, None).unwrap();
        let g = MvGaussian::new(m.clone(), s.clone()).unwrap();
        let mut r = rng(1);
        for _ in 0..200 {
            let x = g.sample(&mut r) + DVector::from_element(3, 0.3);
            assert_relative_eq!(p.logpdf(&x), g.logpdf(&x), epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_marginals_stay_in_support() {
        let m = DVector::from_row_slice(&[1.0, -2.0]);
        let s = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 0.75]);
        let p = CopulaProposal::from_moments(&m, &s, CopulaKind::T, MarginalKind::Uniform, Some(4.0)).unwrap();
        let mut r = rng(2);
        for _ in 0..2000 {
            let x = p.sample(&mut r);
            assert!((-2.0..=4.0).contains(&x[0]));
            assert!((-3.5..=-0.5).contains(&x[1]));
        }
        assert_eq!(p.logpdf(&DVector::from_row_slice(&[4.5, -2.0])), f64::NEG_INFINITY);
    }

    #[test]
    fn one_dimensional_proposal_is_its_marginal() {
        let m = DVector::from_element(1, 0.3);
        let s = DMatrix::from_element(1, 1, 2.0);
        for kind in [CopulaKind::Gaussian, CopulaKind::T] {
            for mk in MarginalKind::ALL {
                let p = CopulaProposal::from_moments(&m, &s, kind, mk, None).unwrap();
                for x in [-0.5, 0.3, 1.1] {
                    let v = DVector::from_element(1, x);
                    assert_relative_eq!(p.logpdf(&v), p.marginals()[0].logpdf(x), epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn proposal_densities_integrate_to_one() {
        // Quadrature after the substitution x_j = F_j^-1(Phi(y_j)), which
        // smooths the corner singularities of bounded marginals.
        use crate::distributions::std_normal_logpdf;
        let m = DVector::from_row_slice(&[0.0, 0.0]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let h = 0.02;
        for kind in [CopulaKind::Gaussian, CopulaKind::T] {
            for mk in MarginalKind::ALL {
                let p = CopulaProposal::from_moments(&m, &s, kind, mk, None).unwrap();
                let f = p.marginals();
                let mut total = 0.0;
                for i in -350..350 {
                    for j in -350..350 {
                        let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                        let x: Vec<f64> = (0..2).map(|k| f[k].inv_cdf(std_normal_cdf(y[k]))).collect();
                        let log_jac: f64 = (0..2).map(|k| std_normal_logpdf(y[k]) - f[k].logpdf(x[k])).sum();
                        let lp = p.logpdf(&DVector::from_row_slice(&x));
                        if lp.is_finite() && log_jac.is_finite() {
                            total += (lp + log_jac).exp();
                        }
                    }
                }
                total *= h * h;
                assert!((total - 1.0).abs() < 0.01, "{kind:?}/{mk:?}: {total}");
            }
        }
    }

    #[test]
    fn moments_preserved_by_sampling() {
        let m = DVector::from_row_slice(&[1.0, -0.5]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 0.5]);
        let n = 100_000;
        for kind in [CopulaKind::Gaussian, CopulaKind::T] {
            for mk in MarginalKind::ALL {
                let p = CopulaProposal::from_moments(&m, &s, kind, mk, None).unwrap();
                let mut r = rng(4);
                let xs: Vec<_> = (0..n).map(|_| p.sample(&mut r)).collect();
                let w = vec![1.0 / n as f64; n];
                let jm = crate::stats::weighted_moments(&xs, &w, 2).unwrap();
                for j in 0..2 {
                    let se = (s[(j, j)] / n as f64).sqrt();
                    assert!((jm.mean[j] - m[j]).abs() < 4.0 * se, "{kind:?}/{mk:?} mean {j}");
                    assert!((jm.cov[(j, j)] / s[(j, j)] - 1.0).abs() < 0.05, "{kind:?}/{mk:?} var {j}");
                }
                assert!(jm.cov[(0, 1)] > 0.0);
            }
        }
    }

    #[test]
    fn importance_reweighting_recovers_gaussian() {
        let m = DVector::from_row_slice(&[0.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let p = CopulaProposal::from_moments(&m, &s, CopulaKind::T, MarginalKind::Logistic, None).unwrap();
        let target = MvGaussian::new(m.clone(), s.clone()).unwrap();
        let mut r = rng(8);
        let n = 50_000;
        let mut sw = 0.0;
        let mut sx = 0.0;
        let mut sxx = 0.0;
        for _ in 0..n {
            let x = p.sample(&mut r);
            let w = (target.logpdf(&x) - p.logpdf(&x)).exp();
            sw += w;
            sx += w * x[1];
            sxx += w * x[0] * x[1];
        }
        assert!((sx / sw - 1.0).abs() < 0.03);
        assert!((sxx / sw - 0.4).abs() < 0.04);
    }
}
