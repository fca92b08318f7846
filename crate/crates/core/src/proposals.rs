//! Proposal samplers: fitting from the previous particle system, drawing new
//! parameters, and evaluating the proposal density used in importance weights.
//!
//! SIS kinds (`blocked`, `blockedopt`, `hybrid` and their copula versions)
//! propose from one global density `g_t`. SMC kinds pick an ancestor
//! `theta_j` with probability `w_j` and perturb it with a Gaussian kernel; the
//! proposal density is then the mixture `sum_j w_j q_t(theta | theta_j)`.
//! Every SMC kernel here is Gaussian with an ancestor-specific mean and
//! either a shared or an ancestor-specific covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaKind, CopulaProposal};
use crate::distributions::{MarginalKind, MvGaussian};
use crate::engine::ParticleSystem;
use crate::models::Model;
use crate::stats::{weighted_moments, GaussianConditioner, JointMoments};
use crate::{AbcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    Prior,
    Standard,
    Olcm,
    Componentwise,
    Blocked,
    Blockedopt,
    Hybrid,
    #[serde(alias = "cop-blocked")]
    CopBlocked,
    #[serde(alias = "cop-blockedopt")]
    CopBlockedopt,
    #[serde(alias = "cop-hybrid")]
    CopHybrid,
    Fullcond,
    Fullcondopt,
    Fullcondoptblocked,
}

impl ProposalKind {
    pub const ALL: [ProposalKind; 13] = [
        ProposalKind::Prior,
        ProposalKind::Standard,
        ProposalKind::Olcm,
        ProposalKind::Componentwise,
        ProposalKind::Blocked,
        ProposalKind::Blockedopt,
        ProposalKind::Hybrid,
        ProposalKind::CopBlocked,
        ProposalKind::CopBlockedopt,
        ProposalKind::CopHybrid,
        ProposalKind::Fullcond,
        ProposalKind::Fullcondopt,
        ProposalKind::Fullcondoptblocked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProposalKind::Prior => "prior",
            ProposalKind::Standard => "standard",
            ProposalKind::Olcm => "olcm",
            ProposalKind::Componentwise => "componentwise",
            ProposalKind::Blocked => "blocked",
            ProposalKind::Blockedopt => "blockedopt",
            ProposalKind::Hybrid => "hybrid",
            ProposalKind::CopBlocked => "cop_blocked",
            ProposalKind::CopBlockedopt => "cop_blockedopt",
            ProposalKind::CopHybrid => "cop_hybrid",
            ProposalKind::Fullcond => "fullcond",
            ProposalKind::Fullcondopt => "fullcondopt",
            ProposalKind::Fullcondoptblocked => "fullcondoptblocked",
        }
    }

    /// Perturbs resampled ancestors (SMC-ABC) rather than drawing from one
    /// global density (SIS-ABC).
    pub fn is_smc(self) -> bool {
        matches!(
            self,
            ProposalKind::Standard
                | ProposalKind::Olcm
                | ProposalKind::Componentwise
                | ProposalKind::Fullcond
                | ProposalKind::Fullcondopt
                | ProposalKind::Fullcondoptblocked
        )
    }

    pub fn is_copula(self) -> bool {
        matches!(
            self,
            ProposalKind::CopBlocked | ProposalKind::CopBlockedopt | ProposalKind::CopHybrid
        )
    }

    pub fn is_guided(self) -> bool {
        !matches!(
            self,
            ProposalKind::Prior | ProposalKind::Standard | ProposalKind::Olcm | ProposalKind::Componentwise
        )
    }

    /// Kinds whose fit needs the previous particles that already beat the new threshold.
    pub fn uses_n0(self) -> bool {
        matches!(
            self,
            ProposalKind::Olcm
                | ProposalKind::Blockedopt
                | ProposalKind::CopBlockedopt
                | ProposalKind::Fullcondopt
                | ProposalKind::Fullcondoptblocked
        )
    }
}

impl std::fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A proposal kind with its copula or block configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSpec {
    pub kind: ProposalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copula: Option<CopulaKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<MarginalKind>,
    /// Degrees of freedom shared by the t copula and t marginals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Zero-based parameter indices proposed jointly by `fullcondoptblocked`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<Vec<usize>>,
}

impl ProposalSpec {
    pub fn new(kind: ProposalKind) -> Self {
        Self {
            kind,
            copula: None,
            marginal: None,
            nu: None,
            block: None,
        }
    }

    pub fn copula(kind: ProposalKind, copula: CopulaKind, marginal: MarginalKind) -> Self {
        Self {
            copula: Some(copula),
            marginal: Some(marginal),
            ..Self::new(kind)
        }
    }

    pub fn fullcondoptblocked(block: Vec<usize>) -> Self {
        Self {
            block: Some(block),
            ..Self::new(ProposalKind::Fullcondoptblocked)
        }
    }

    /// Short label such as `cop_blocked[gaussian/triangular]`.
    pub fn label(&self) -> String {
        match (self.copula, self.marginal) {
            (Some(c), Some(m)) => format!(
                "{}[{}/{}]",
                self.kind,
                match c {
                    CopulaKind::Gaussian => "gaussian",
                    CopulaKind::T => "t",
                },
                m.name()
            ),
            _ => self.kind.name().to_string(),
        }
    }

    pub fn validate(&self, d_theta: usize) -> Result<()> {
        let err = |field: &str, message: String| {
            Err(AbcError::Config {
                field: format!("proposal.{field}"),
                message,
            })
        };
        if self.kind.is_copula() {
            if self.copula.is_none() {
                return err("copula", format!("{} needs a copula kind", self.kind));
            }
            if self.marginal.is_none() {
                return err("marginal", format!("{} needs a marginal family", self.kind));
            }
            if let Some(nu) = self.nu {
                let t_marg = self.marginal == Some(MarginalKind::LocationScaleT);
                if !(nu > 0.0 && nu.is_finite()) || (t_marg && nu <= 2.0) {
                    return err("nu", format!("invalid degrees of freedom {nu}"));
                }
            }
        } else {
            if self.copula.is_some() {
                return err("copula", format!("{} takes no copula", self.kind));
            }
            if self.marginal.is_some() {
                return err("marginal", format!("{} takes no marginal family", self.kind));
            }
            if self.nu.is_some() {
                return err("nu", format!("{} takes no degrees of freedom", self.kind));
            }
        }
        match (&self.block, self.kind) {
            (Some(block), ProposalKind::Fullcondoptblocked) => {
                let mut sorted = block.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != block.len() || block.len() < 2 {
                    return err("block", "needs at least two distinct indices".into());
                }
                if let Some(bad) = block.iter().find(|&&i| i >= d_theta) {
                    return err("block", format!("index {bad} out of range for {d_theta} parameters"));
                }
            }
            (None, ProposalKind::Fullcondoptblocked) => {
                return err("block", "fullcondoptblocked needs a block of parameter indices".into())
            }
            (Some(_), kind) => return err("block", format!("{kind} takes no block")),
            (None, _) => {}
        }
        Ok(())
    }
}

/// Previous-iteration particles whose distance is below `delta`, with
/// renormalized weights.
pub fn n0_subset(system: &ParticleSystem, delta: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let idx: Vec<usize> = (0..system.len()).filter(|&i| system.distances[i] < delta).collect();
    let total: f64 = idx.iter().map(|&i| system.weights[i]).sum();
    if idx.is_empty() || !(total > 0.0) {
        return Err(AbcError::EmptySubset);
    }
    let gamma = idx.iter().map(|&i| system.weights[i] / total).collect();
    Ok((idx, gamma))
}

/// Weighted mean of the N0 particles and their covariance about that mean.
fn n0_moments(system: &ParticleSystem, idx: &[usize], gamma: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = system.d_theta();
    let mut mean = DVector::zeros(d);
    for (&i, &g) in idx.iter().zip(gamma) {
        mean.axpy(g, &system.thetas[i], 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (&i, &g) in idx.iter().zip(gamma) {
        let c = &system.thetas[i] - &mean;
        cov.ger(g, &c, &c, 1.0);
    }
    (mean, cov)
}

/// `sum_l gamma_l (x_l - c)(x_l - c)^T` written as `C + (m - c)(m - c)^T`.
fn second_moment_about(n0_mean: &DVector<f64>, n0_cov: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let diff = n0_mean - center;
    let mut m = n0_cov.clone();
    m.ger(1.0, &diff, &diff, 1.0);
    m
}

#[derive(Debug, Clone)]
pub enum GlobalProposal {
    Gaussian(MvGaussian),
    Copula(CopulaProposal),
}

impl GlobalProposal {
    pub fn mean(&self) -> &DVector<f64> {
        match self {
            GlobalProposal::Gaussian(g) => g.mean(),
            GlobalProposal::Copula(c) => c.source_mean(),
        }
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        match self {
            GlobalProposal::Gaussian(g) => g.cov(),
            GlobalProposal::Copula(c) => c.source_cov(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum KernelCovariance {
    Shared(MvGaussian),
    PerAncestor(Vec<MvGaussian>),
}

/// `sum_j w_j N(theta; mu_j, Sigma_j)` over the previous particles.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: Vec<DVector<f64>>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    covs: KernelCovariance,
}

impl GaussianMixture {
    fn new(means: Vec<DVector<f64>>, weights: &[f64], covs: KernelCovariance) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self {
            means,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            cumulative,
            covs,
        }
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn kernel(&self, j: usize) -> &MvGaussian {
        match &self.covs {
            KernelCovariance::Shared(g) => g,
            KernelCovariance::PerAncestor(v) => &v[j],
        }
    }

    pub fn pick_ancestor(&self, rng: &mut dyn RngCore) -> usize {
        let total = *self.cumulative.last().expect("non-empty mixture");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.means.len() - 1)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> (DVector<f64>, usize) {
        let j = self.pick_ancestor(rng);
        let kernel = self.kernel(j);
        let z = kernel.sample(rng);
        (&self.means[j] + z, j)
    }

    pub fn logpdf(&self, theta: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .means
            .iter()
            .enumerate()
            .map(|(j, mu)| self.log_weights[j] + self.kernel(j).logpdf_centered(mu, theta))
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A proposal ready to generate candidates for one iteration.
#[derive(Debug, Clone)]
pub enum FittedProposal {
    Prior,
    Global(GlobalProposal),
    Mixture(GaussianMixture),
}

fn zero_centred(cov: DMatrix<f64>) -> Result<MvGaussian> {
    MvGaussian::new(DVector::zeros(cov.nrows()), cov)
}

/// Global `(m*, S*)` of the blocked family.
fn blocked_moments(jm: &JointMoments, s_y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let cond = GaussianConditioner::new(&jm.mean, &jm.cov, &jm.theta_indices(), &jm.summary_indices())?;
    let g = cond.condition(s_y)?;
    Ok((g.mean, g.cov))
}

fn blockedopt_moments(
    jm: &JointMoments,
    system: &ParticleSystem,
    s_y: &DVector<f64>,
    delta: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (idx, gamma) = n0_subset(system, delta)?;
    let (mean, _) = blocked_moments(jm, s_y)?;
    let (n0_mean, n0_cov) = n0_moments(system, &idx, &gamma);
    Ok((mean.clone(), second_moment_about(&n0_mean, &n0_cov, &mean)))
}

/// Regression of each coordinate `k` (or of a block) on all other parameters
/// and the summaries.
struct FullConditional {
    kept: Vec<usize>,
    conditioner: GaussianConditioner,
}

impl FullConditional {
    fn new(jm: &JointMoments, kept: Vec<usize>) -> Result<Self> {
        let others: Vec<usize> = (0..jm.d()).filter(|i| !kept.contains(i)).collect();
        let conditioner = GaussianConditioner::new(&jm.mean, &jm.cov, &kept, &others)?;
        Ok(Self { kept, conditioner })
    }

    /// Conditional mean of the kept coordinates given the ancestor's other
    /// parameters and the observed summaries.
    fn mean_for(&self, theta: &DVector<f64>, s_y: &DVector<f64>) -> Result<DVector<f64>> {
        let d_theta = theta.len();
        let values = DVector::from_iterator(
            self.conditioner.observed.len(),
            self.conditioner
                .observed
                .iter()
                .map(|&i| if i < d_theta { theta[i] } else { s_y[i - d_theta] }),
        );
        self.conditioner.conditional_mean(&values)
    }
}

/// Ancestor-specific means for the fullcond family; `groups[g]` lists the
/// parameter indices that are proposed jointly.
fn fullcond_means(
    jm: &JointMoments,
    system: &ParticleSystem,
    s_y: &DVector<f64>,
    groups: &[Vec<usize>],
) -> Result<(Vec<FullConditional>, Vec<DVector<f64>>)> {
    let regs = groups
        .iter()
        .map(|g| FullConditional::new(jm, g.clone()))
        .collect::<Result<Vec<_>>>()?;
    let d = system.d_theta();
    let means = system
        .thetas
        .iter()
        .map(|theta| {
            let mut mu = DVector::zeros(d);
            for reg in &regs {
                let m = reg.mean_for(theta, s_y)?;
                for (a, &k) in reg.kept.iter().enumerate() {
                    mu[k] = m[a];
                }
            }
            Ok(mu)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((regs, means))
}

impl FittedProposal {
    /// Fits the proposal for iteration `t >= 2` from the particles of `t - 1`.
    pub fn fit(
        spec: &ProposalSpec,
        system: &ParticleSystem,
        s_y: &DVector<f64>,
        delta: f64,
        t: usize,
    ) -> Result<Self> {
        spec.validate(system.d_theta())?;
        let weights = &system.weights;
        let joint = || JointMoments::from_particles(&system.thetas, &system.summaries, weights);
        let global_gaussian = |(m, s): (DVector<f64>, DMatrix<f64>)| -> Result<Self> {
            Ok(FittedProposal::Global(GlobalProposal::Gaussian(MvGaussian::new(m, s)?)))
        };
        let global_copula = |(m, s): (DVector<f64>, DMatrix<f64>)| -> Result<Self> {
            Ok(FittedProposal::Global(GlobalProposal::Copula(CopulaProposal::from_moments(
                &m,
                &s,
                spec.copula.expect("validated"),
                spec.marginal.expect("validated"),
                spec.nu,
            )?)))
        };
        let use_opt = |kind: ProposalKind| match kind {
            ProposalKind::Blockedopt | ProposalKind::CopBlockedopt => true,
            ProposalKind::Hybrid | ProposalKind::CopHybrid => t > 2,
            _ => false,
        };
        match spec.kind {
            ProposalKind::Prior => Ok(FittedProposal::Prior),
            ProposalKind::Blocked | ProposalKind::Blockedopt | ProposalKind::Hybrid => {
                let jm = joint()?;
                if use_opt(spec.kind) {
                    global_gaussian(blockedopt_moments(&jm, system, s_y, delta)?)
                } else {
                    global_gaussian(blocked_moments(&jm, s_y)?)
                }
            }
            ProposalKind::CopBlocked | ProposalKind::CopBlockedopt | ProposalKind::CopHybrid => {
                let jm = joint()?;
                if use_opt(spec.kind) {
                    global_copula(blockedopt_moments(&jm, system, s_y, delta)?)
                } else {
                    global_copula(blocked_moments(&jm, s_y)?)
                }
            }
            ProposalKind::Standard | ProposalKind::Componentwise => {
                let cov = weighted_moments(&system.thetas, weights, system.d_theta())?.cov;
                let cov = if spec.kind == ProposalKind::Standard {
                    cov * 2.0
                } else {
                    DMatrix::from_diagonal(&(cov.diagonal() * 2.0))
                };
                Ok(FittedProposal::Mixture(GaussianMixture::new(
                    system.thetas.clone(),
                    weights,
                    KernelCovariance::Shared(zero_centred(cov)?),
                )))
            }
            ProposalKind::Olcm => {
                let (idx, gamma) = n0_subset(system, delta)?;
                let (n0_mean, n0_cov) = n0_moments(system, &idx, &gamma);
                let kernels = system
                    .thetas
                    .iter()
                    .map(|th| zero_centred(second_moment_about(&n0_mean, &n0_cov, th)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(FittedProposal::Mixture(GaussianMixture::new(
                    system.thetas.clone(),
                    weights,
                    KernelCovariance::PerAncestor(kernels),
                )))
            }
            ProposalKind::Fullcond => {
                let jm = joint()?;
                let groups: Vec<Vec<usize>> = (0..system.d_theta()).map(|k| vec![k]).collect();
                let (regs, means) = fullcond_means(&jm, system, s_y, &groups)?;
                let var = DVector::from_iterator(
                    regs.len(),
                    regs.iter().map(|r| r.conditioner.raw_cov()[(0, 0)]),
                );
                Ok(FittedProposal::Mixture(GaussianMixture::new(
                    means,
                    weights,
                    KernelCovariance::Shared(zero_centred(DMatrix::from_diagonal(&var))?),
                )))
            }
            ProposalKind::Fullcondopt => {
                let (idx, gamma) = n0_subset(system, delta)?;
                let jm = joint()?;
                let groups: Vec<Vec<usize>> = (0..system.d_theta()).map(|k| vec![k]).collect();
                let (_, means) = fullcond_means(&jm, system, s_y, &groups)?;
                let (n0_mean, n0_cov) = n0_moments(system, &idx, &gamma);
                let kernels = means
                    .iter()
                    .map(|mu| {
                        let full = second_moment_about(&n0_mean, &n0_cov, mu);
                        zero_centred(DMatrix::from_diagonal(&full.diagonal()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(FittedProposal::Mixture(GaussianMixture::new(
                    means,
                    weights,
                    KernelCovariance::PerAncestor(kernels),
                )))
            }
            ProposalKind::Fullcondoptblocked => {
                let block = spec.block.clone().expect("validated");
                let (idx, gamma) = n0_subset(system, delta)?;
                let jm = joint()?;
                let d = system.d_theta();
                let mut groups = vec![block.clone()];
                groups.extend((0..d).filter(|k| !block.contains(k)).map(|k| vec![k]));
                let (regs, means) = fullcond_means(&jm, system, s_y, &groups)?;
                let (n0_mean, n0_cov) = n0_moments(system, &idx, &gamma);
                let kernels = means
                    .iter()
                    .map(|mu| {
                        let around = second_moment_about(&n0_mean, &n0_cov, mu);
                        let mut cov = DMatrix::zeros(d, d);
                        for &a in &block {
                            for &b in &block {
                                cov[(a, b)] = around[(a, b)];
                            }
                        }
                        for reg in &regs[1..] {
                            let k = reg.kept[0];
                            cov[(k, k)] = reg.conditioner.raw_cov()[(0, 0)];
                        }
                        zero_centred(cov)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(FittedProposal::Mixture(GaussianMixture::new(
                    means,
                    weights,
                    KernelCovariance::PerAncestor(kernels),
                )))
            }
        }
    }

    /// Draws a candidate and, for SMC kinds, the index of its ancestor.
    pub fn generate(&self, model: &dyn Model, rng: &mut dyn RngCore) -> (DVector<f64>, Option<usize>) {
        match self {
            FittedProposal::Prior => (model.prior_sample(rng), None),
            FittedProposal::Global(GlobalProposal::Gaussian(g)) => (g.sample(rng), None),
            FittedProposal::Global(GlobalProposal::Copula(c)) => (c.sample(rng), None),
            FittedProposal::Mixture(m) => {
                let (theta, j) = m.sample(rng);
                (theta, Some(j))
            }
        }
    }

    /// `log g_t(theta)`; for SMC kinds the log of the ancestor mixture.
    pub fn log_gt(&self, model: &dyn Model, theta: &DVector<f64>) -> f64 {
        match self {
            FittedProposal::Prior => model.prior_logpdf(theta),
            FittedProposal::Global(GlobalProposal::Gaussian(g)) => g.logpdf(theta),
            FittedProposal::Global(GlobalProposal::Copula(c)) => c.logpdf(theta),
            FittedProposal::Mixture(m) => m.logpdf(theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::std_normal_logpdf;
    use crate::models::{GaussianToy, GaussianToyParams};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn system(thetas: Vec<DVector<f64>>, summaries: Vec<DVector<f64>>, distances: Vec<f64>, weights: Vec<f64>) -> ParticleSystem {
        ParticleSystem::from_weights(thetas, summaries, distances, weights, 1, 10.0).unwrap()
    }

    /// A small correlated 2-parameter, 1-summary particle cloud.
    fn cloud(n: usize, seed: u64) -> ParticleSystem {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = stream(seed, 0, 0);
        let mut th = Vec::new();
        let mut ss = Vec::new();
        let mut ds = Vec::new();
        let mut ws = Vec::new();
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            let e: f64 = StandardNormal.sample(&mut r);
            let theta = dv(&[a, 0.6 * a + 0.8 * b]);
            let s = dv(&[theta[0] + theta[1] + 0.5 * e]);
            ds.push(s[0].abs());
            th.push(theta);
            ss.push(s);
            ws.push(1.0 + (i % 3) as f64);
        }
        let total: f64 = ws.iter().sum();
        let ws = ws.iter().map(|w| w / total).collect();
        system(th, ss, ds, ws)
    }

    #[test]
    fn kind_names_and_aliases() {
        for kind in ProposalKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            assert_eq!(serde_json::from_str::<ProposalKind>(&json).unwrap(), kind);
        }
        assert_eq!(
            serde_json::from_str::<ProposalKind>("\"cop-blocked\"").unwrap(),
            ProposalKind::CopBlocked
        );
        assert!(serde_json::from_str::<ProposalKind>("\"gibbs\"").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ProposalSpec::new(ProposalKind::Blocked).validate(2).is_ok());
        assert!(ProposalSpec::new(ProposalKind::CopBlocked).validate(2).is_err());
        assert!(ProposalSpec::copula(ProposalKind::CopHybrid, CopulaKind::T, MarginalKind::Uniform)
            .validate(2)
            .is_ok());
        let mut bad = ProposalSpec::new(ProposalKind::Blocked);
        bad.marginal = Some(MarginalKind::Normal);
        assert!(bad.validate(2).is_err());
        assert!(ProposalSpec::fullcondoptblocked(vec![0, 1]).validate(5).is_ok());
        assert!(ProposalSpec::fullcondoptblocked(vec![0]).validate(5).is_err());
        assert!(ProposalSpec::fullcondoptblocked(vec![0, 5]).validate(5).is_err());
        assert!(ProposalSpec::new(ProposalKind::Fullcondoptblocked).validate(5).is_err());
    }

    #[test]
    fn n0_examples() {
        let sys = system(
            vec![dv(&[0.0]), dv(&[1.0]), dv(&[2.0])],
            vec![dv(&[0.0]); 3],
            vec![1.0, 2.0, 3.0],
            vec![0.2, 0.3, 0.5],
        );
        let (idx, gamma) = n0_subset(&sys, 2.5).unwrap();
        assert_eq!(idx, vec![0, 1]);
        assert_relative_eq!(gamma[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(gamma[1], 0.6, epsilon = 1e-15);
        let (idx, gamma) = n0_subset(&sys, 10.0).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(gamma, sys.weights);
        assert!(matches!(n0_subset(&sys, 0.5), Err(AbcError::EmptySubset)));
    }

    #[test]
    fn blocked_without_cross_covariance_is_unguided() {
        // Summaries independent of parameters: guiding term vanishes.
        let thetas = vec![dv(&[0.0]), dv(&[2.0]), dv(&[0.0]), dv(&[2.0])];
        let summaries = vec![dv(&[1.0]), dv(&[1.0]), dv(&[-1.0]), dv(&[-1.0])];
        let sys = system(thetas, summaries, vec![0.1; 4], vec![0.25; 4]);
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Blocked), &sys, &dv(&[5.0]), 1.0, 2).unwrap();
        match fp {
            FittedProposal::Global(GlobalProposal::Gaussian(g)) => {
                assert_relative_eq!(g.mean()[0], 1.0, epsilon = 1e-12);
                assert_relative_eq!(g.cov()[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn guiding_term_vanishes_at_summary_mean() {
        let sys = cloud(200, 3);
        let jm = JointMoments::from_particles(&sys.thetas, &sys.summaries, &sys.weights).unwrap();
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Blocked), &sys, &jm.mean_s(), 1.0, 2).unwrap();
        if let FittedProposal::Global(g) = fp {
            assert_relative_eq!(g.mean().clone(), jm.mean_theta(), epsilon = 1e-12);
        } else {
            panic!()
        }
    }

    #[test]
    fn hybrid_switches_at_iteration_three() {
        let sys = cloud(100, 4);
        let s_y = dv(&[0.3]);
        let sample = |spec: &ProposalSpec, t: usize| {
            let fp = FittedProposal::fit(spec, &sys, &s_y, 0.8, t).unwrap();
            let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
            let mut r = stream(1, 0, 0);
            let (x, _) = fp.generate(&toy, &mut r);
            (x, fp.log_gt(&toy, &dv(&[0.1, -0.2])))
        };
        let hybrid = ProposalSpec::new(ProposalKind::Hybrid);
        assert_eq!(sample(&hybrid, 2), sample(&ProposalSpec::new(ProposalKind::Blocked), 2));
        assert_eq!(sample(&hybrid, 3), sample(&ProposalSpec::new(ProposalKind::Blockedopt), 3));
        assert_ne!(sample(&hybrid, 2), sample(&hybrid, 3));
    }

    #[test]
    fn copula_gaussian_normal_matches_blocked() {
        let sys = cloud(300, 5);
        let s_y = dv(&[0.5]);
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        for (plain, cop) in [
            (ProposalKind::Blocked, ProposalKind::CopBlocked),
            (ProposalKind::Blockedopt, ProposalKind::CopBlockedopt),
            (ProposalKind::Hybrid, ProposalKind::CopHybrid),
        ] {
            let a = FittedProposal::fit(&ProposalSpec::new(plain), &sys, &s_y, 1.0, 3).unwrap();
            let b = FittedProposal::fit(
                &ProposalSpec::copula(cop, CopulaKind::Gaussian, MarginalKind::Normal),
                &sys,
                &s_y,
                1.0,
                3,
            )
            .unwrap();
            let mut r = stream(2, 0, 0);
            for _ in 0..200 {
                let (x, _) = a.generate(&toy, &mut r);
                assert_relative_eq!(a.log_gt(&toy, &x), b.log_gt(&toy, &x), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn olcm_single_particle_subset() {
        let sys = system(
            vec![dv(&[1.0, 0.0]), dv(&[0.0, 0.0])],
            vec![dv(&[0.0]); 2],
            vec![0.1, 5.0],
            vec![0.5, 0.5],
        );
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Olcm), &sys, &dv(&[0.0]), 1.0, 2).unwrap();
        let FittedProposal::Mixture(m) = fp else { panic!() };
        // Ancestor (0,0): sum gamma (x - theta*)(x - theta*)^T = [[1,0],[0,0]], repaired.
        let k = m.kernel(1).cov();
        assert_relative_eq!(k[(0, 0)], 1.0, epsilon = 1e-9);
        assert!(k[(1, 1)] > 0.0 && k[(1, 1)] < 1e-8);
        // Ancestor (1,0) sits on the only N0 particle: zero matrix, repaired.
        assert!(m.kernel(0).cov().norm() < 1e-8);
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        let mut r = stream(3, 0, 0);
        let (x, j) = FittedProposal::Mixture(m).generate(&toy, &mut r);
        assert!(x.iter().all(|v| v.is_finite()) && j.is_some());
    }

    #[test]
    fn standard_single_ancestor_density() {
        let sys = system(vec![dv(&[0.0]), dv(&[1.0])], vec![dv(&[0.0]); 2], vec![0.0; 2], vec![0.5, 0.5]);
        // Weighted variance of {0, 1} with equal weights: 0.25 / 0.5 = 0.5, so 2 Sigma = 1.
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Standard), &sys, &dv(&[0.0]), 1.0, 2).unwrap();
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        let x = dv(&[0.3]);
        let expected = (0.5 * std_normal_logpdf(0.3).exp() + 0.5 * std_normal_logpdf(-0.7).exp()).ln();
        assert_relative_eq!(fp.log_gt(&toy, &x), expected, epsilon = 1e-12);
    }

    #[test]
    fn importance_ratio_example() {
        // Uniform prior density 0.5 against g_t = phi(0) gives weight 1.2533.
        let w = (0.5f64.ln() - std_normal_logpdf(0.0)).exp();
        assert_relative_eq!(w, 1.2533, epsilon = 1e-4);
    }

    #[test]
    fn identical_kernels_collapse() {
        let sys = system(vec![dv(&[0.4]), dv(&[0.4])], vec![dv(&[0.0]), dv(&[1.0])], vec![0.0; 2], vec![0.5, 0.5]);
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Componentwise), &sys, &dv(&[0.0]), 1.0, 2).unwrap();
        let FittedProposal::Mixture(m) = &fp else { panic!() };
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        let x = dv(&[0.9]);
        assert_relative_eq!(fp.log_gt(&toy, &x), m.kernel(0).logpdf_centered(&dv(&[0.4]), &x), epsilon = 1e-12);
    }

    #[test]
    fn fullcond_one_parameter_equals_blocked_kernel() {
        let sys = system(
            vec![dv(&[0.0]), dv(&[1.0]), dv(&[3.0]), dv(&[2.0])],
            vec![dv(&[0.5]), dv(&[0.7]), dv(&[3.5]), dv(&[1.0])],
            vec![0.1; 4],
            vec![0.1, 0.2, 0.3, 0.4],
        );
        let s_y = dv(&[1.2]);
        let blocked = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Blocked), &sys, &s_y, 1.0, 2).unwrap();
        let full = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Fullcond), &sys, &s_y, 1.0, 2).unwrap();
        let (FittedProposal::Global(g), FittedProposal::Mixture(m)) = (&blocked, &full) else { panic!() };
        for j in 0..4 {
            assert_relative_eq!(m.means()[j][0], g.mean()[0], epsilon = 1e-12);
            assert_relative_eq!(m.kernel(j).cov()[(0, 0)], g.cov()[(0, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn fullcondopt_hand_instance() {
        // theta independent of s and of each other: means reduce to m_k and the
        // local variances to sum gamma (x_k - m_k)^2 over the full set.
        let thetas = vec![dv(&[0.0, 0.0]), dv(&[2.0, 0.0]), dv(&[0.0, 2.0]), dv(&[2.0, 2.0])];
        let summaries = vec![dv(&[1.0]), dv(&[-1.0]), dv(&[-1.0]), dv(&[1.0])];
        let sys = system(thetas, summaries, vec![0.1; 4], vec![0.25; 4]);
        let fp = FittedProposal::fit(&ProposalSpec::new(ProposalKind::Fullcondopt), &sys, &dv(&[0.0]), 1.0, 2).unwrap();
        let FittedProposal::Mixture(m) = fp else { panic!() };
        for j in 0..4 {
            assert_relative_eq!(m.means()[j].clone(), dv(&[1.0, 1.0]), epsilon = 1e-12);
            assert_relative_eq!(m.kernel(j).cov().clone(), DMatrix::identity(2, 2), epsilon = 1e-12);
        }
    }

    #[test]
    fn mixture_densities_integrate_to_one() {
        let sys = cloud(8, 6);
        let s_y = dv(&[0.2]);
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        let specs = [
            ProposalSpec::new(ProposalKind::Standard),
            ProposalSpec::new(ProposalKind::Olcm),
            ProposalSpec::new(ProposalKind::Componentwise),
            ProposalSpec::new(ProposalKind::Blocked),
            ProposalSpec::new(ProposalKind::Blockedopt),
            ProposalSpec::new(ProposalKind::Fullcond),
            ProposalSpec::new(ProposalKind::Fullcondopt),
            ProposalSpec::fullcondoptblocked(vec![0, 1]),
            ProposalSpec::copula(ProposalKind::CopBlocked, CopulaKind::T, MarginalKind::Logistic),
        ];
        let delta = sys.distances.iter().copied().fold(0.0, f64::max) + 1.0;
        for spec in specs {
            let fp = FittedProposal::fit(&spec, &sys, &s_y, delta, 3).unwrap();
            let h = 0.05;
            let mut total = 0.0;
            for i in -200..200 {
                for j in -200..200 {
                    let x = dv(&[(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                    total += fp.log_gt(&toy, &x).exp();
                }
            }
            total *= h * h;
            assert!((total - 1.0).abs() < 0.02, "{}: {total}", spec.label());
        }
    }

    #[test]
    fn mixture_sampling_matches_density() {
        // Self-normalized estimate of E[theta^2] under g via a wide reference
        // density, against direct sampling from g.
        let sys = cloud(30, 7);
        let s_y = dv(&[0.0]);
        let toy = GaussianToy::new(GaussianToyParams::default()).unwrap();
        for kind in [ProposalKind::Standard, ProposalKind::Olcm, ProposalKind::Fullcond, ProposalKind::Fullcondopt] {
            let fp = FittedProposal::fit(&ProposalSpec::new(kind), &sys, &s_y, 10.0, 2).unwrap();
            let mut r = stream(8, 0, 0);
            let n = 40_000;
            let direct: Vec<f64> = (0..n).map(|_| fp.generate(&toy, &mut r).0[0].powi(2)).collect();
            let mean_d = direct.iter().sum::<f64>() / n as f64;
            let reference = MvGaussian::new(DVector::zeros(2), DMatrix::identity(2, 2) * 9.0).unwrap();
            let (mut sw, mut sf) = (0.0, 0.0);
            for _ in 0..n {
                let x = reference.sample(&mut r);
                let w = (fp.log_gt(&toy, &x) - reference.logpdf(&x)).exp();
                sw += w;
                sf += w * x[0] * x[0];
            }
            let mean_is = sf / sw;
            let sd = (direct.iter().map(|v| (v - mean_d).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!((mean_is - mean_d).abs() < 3.0 * 3.0 * sd / (n as f64).sqrt(), "{kind}: {mean_is} vs {mean_d}");
        }
    }
}
