//! Weighted moments, Gaussian conditioning and positive-definiteness repair.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{AbcError, Result};

/// Weighted mean and covariance of stacked `(theta, s)` particles.
///
/// The first `d_theta` coordinates are parameters, the remaining `d_s` are
/// summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub d_theta: usize,
}

impl JointMoments {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, d_theta: usize) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(AbcError::DimensionMismatch(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if d_theta > d {
            return Err(AbcError::DimensionMismatch(format!(
                "d_theta = {d_theta} exceeds joint dimension {d}"
            )));
        }
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
            d_theta,
        })
    }

    /// Moments of particles `(theta_i, s_i)` under normalized `weights`.
    pub fn from_particles(
        thetas: &[DVector<f64>],
        summaries: &[DVector<f64>],
        weights: &[f64],
    ) -> Result<Self> {
        if thetas.len() != summaries.len() {
            return Err(AbcError::DimensionMismatch(format!(
                "{} parameter vectors but {} summary vectors",
                thetas.len(),
                summaries.len()
            )));
        }
        let d_theta = thetas.first().map_or(0, |t| t.len());
        let stacked: Vec<DVector<f64>> = thetas
            .iter()
            .zip(summaries)
            .map(|(t, s)| DVector::from_iterator(t.len() + s.len(), t.iter().chain(s.iter()).copied()))
            .collect();
        weighted_moments(&stacked, weights, d_theta)
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn d_s(&self) -> usize {
        self.d() - self.d_theta
    }

    pub fn theta_indices(&self) -> Vec<usize> {
        (0..self.d_theta).collect()
    }

    pub fn summary_indices(&self) -> Vec<usize> {
        (self.d_theta..self.d()).collect()
    }

    pub fn mean_theta(&self) -> DVector<f64> {
        self.mean.rows(0, self.d_theta).into_owned()
    }

    pub fn mean_s(&self) -> DVector<f64> {
        self.mean.rows(self.d_theta, self.d_s()).into_owned()
    }

    pub fn cov_theta(&self) -> DMatrix<f64> {
        self.cov.view((0, 0), (self.d_theta, self.d_theta)).into_owned()
    }

    pub fn cov_s(&self) -> DMatrix<f64> {
        self.cov
            .view((self.d_theta, self.d_theta), (self.d_s(), self.d_s()))
            .into_owned()
    }

    pub fn cov_theta_s(&self) -> DMatrix<f64> {
        self.cov
            .view((0, self.d_theta), (self.d_theta, self.d_s()))
            .into_owned()
    }

    pub fn cov_s_theta(&self) -> DMatrix<f64> {
        self.cov_theta_s().transpose()
    }
}

/// A Gaussian obtained by conditioning a joint Gaussian on some coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Weighted mean and covariance with the `1 / (1 - sum w^2)` bias correction.
pub fn weighted_moments(
    points: &[DVector<f64>],
    weights: &[f64],
    d_theta: usize,
) -> Result<JointMoments> {
    let n = points.len();
    if n < 2 {
        return Err(AbcError::InvalidParameter(format!(
            "weighted moments need at least 2 points, got {n}"
        )));
    }
    if weights.len() != n {
        return Err(AbcError::DimensionMismatch(format!(
            "{n} points but {} weights",
            weights.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(AbcError::DimensionMismatch("points of unequal length".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(AbcError::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(AbcError::InvalidParameter(format!(
            "weights must sum to 1, got {total}"
        )));
    }
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    if sum_sq >= 1.0 - 1e-12 {
        return Err(AbcError::DegenerateWeights(sum_sq));
    }

    let mut mean = DVector::zeros(d);
    for (p, &w) in points.iter().zip(weights) {
        mean.axpy(w, p, 1.0);
    }
    // d x n matrix of centred points, and the same scaled column-wise by w.
    let mut centred = DMatrix::zeros(d, n);
    let mut scaled = DMatrix::zeros(d, n);
    for (i, (p, &w)) in points.iter().zip(weights).enumerate() {
        let c = p - &mean;
        scaled.set_column(i, &(&c * w));
        centred.set_column(i, &c);
    }
    let cov = (scaled * centred.transpose()) / (1.0 - sum_sq);
    JointMoments::new(mean, cov, d_theta)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clamping floor used by [`ensure_positive_definite`]: `1e-10 * max(1, ||M||_F)`.
pub fn repair_epsilon(m: &DMatrix<f64>) -> f64 {
    1e-10 * m.norm().max(1.0)
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn cholesky_with_floor(m: &DMatrix<f64>, floor: f64) -> Option<Cholesky<f64, Dyn>> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    if (0..m.nrows()).all(|i| {
        let p = l[(i, i)];
        p.is_finite() && p * p >= floor
    }) {
        Some(chol)
    } else {
        None
    }
}

/// Returns a positive-definite version of the symmetric matrix `m` together
/// with its Cholesky factor.
///
/// A plain Cholesky factorization is tried first; it is accepted when every
/// squared pivot is at least `eps / 2` (see [`repair_epsilon`]), in which case
/// `m` is returned unchanged. Otherwise the eigenvalues are clamped from below
/// at `eps`, which is the Frobenius-nearest matrix with that spectral floor.
pub fn ensure_positive_definite(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    if !m.is_square() {
        return Err(AbcError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(AbcError::NonFinite);
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > 1e-9 * scale {
        return Err(AbcError::NonSymmetric(asym));
    }
    let eps = repair_epsilon(m);
    if let Some(chol) = cholesky_with_floor(m, 0.5 * eps) {
        return Ok((m.clone(), chol));
    }

    let eig = SymmetricEigen::new(symmetrize(m));
    let clamped = eig.eigenvalues.map(|l| l.max(eps));
    let mut floor = eps;
    let mut repaired = symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()),
    );
    // Rounding in the reconstruction can leave a pivot marginally short; the
    // ridge only grows if that happens.
    for _ in 0..60 {
        if let Some(chol) = cholesky_with_floor(&repaired, 0.5 * eps) {
            return Ok((repaired, chol));
        }
        for i in 0..repaired.nrows() {
            repaired[(i, i)] += floor;
        }
        floor *= 2.0;
    }
    Err(AbcError::SingularConditioning)
}

/// `R_ij = S_ij / sqrt(S_ii S_jj)`, clamped to `[-1, 1]` with an exact unit diagonal.
pub fn correlation_from_covariance(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(AbcError::DimensionMismatch("covariance must be square".into()));
    }
    let d = s.nrows();
    let sd: Vec<f64> = (0..d)
        .map(|i| {
            let v = s[(i, i)];
            if v > 0.0 && v.is_finite() {
                Ok(v.sqrt())
            } else {
                Err(AbcError::ZeroVariance(i))
            }
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            (s[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    }))
}

fn check_index_sets(d: usize, kept: &[usize], observed: &[usize]) -> Result<()> {
    if kept.is_empty() {
        return Err(AbcError::DimensionMismatch("no coordinates kept".into()));
    }
    let mut seen = vec![false; d];
    for &i in kept.iter().chain(observed) {
        if i >= d {
            return Err(AbcError::DimensionMismatch(format!(
                "index {i} out of range for dimension {d}"
            )));
        }
        if seen[i] {
            return Err(AbcError::DimensionMismatch(format!(
                "index {i} repeated or shared between kept and observed sets"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

pub fn select(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn select_block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Precomputed regression of coordinates `A` on coordinates `B` of a joint
/// Gaussian: `mean_A|B(x) = m_A + K (x - m_B)` with `K = S_AB S_BB^-1`, and
/// `cov_A|B = S_AA - K S_BA`.
///
/// One conditioner is built per iteration and reused for every ancestor
/// particle, which is what the per-coordinate SMC kernels need.
#[derive(Debug, Clone)]
pub struct GaussianConditioner {
    pub kept: Vec<usize>,
    pub observed: Vec<usize>,
    mean_kept: DVector<f64>,
    mean_observed: DVector<f64>,
    gain: DMatrix<f64>,
    cond_cov: DMatrix<f64>,
}

impl GaussianConditioner {
    pub fn new(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        kept: &[usize],
        observed: &[usize],
    ) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(AbcError::DimensionMismatch(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        check_index_sets(d, kept, observed)?;
        let mean_kept = select(mean, kept);
        let mean_observed = select(mean, observed);
        let s_aa = select_block(cov, kept, kept);
        if observed.is_empty() {
            return Ok(Self {
                kept: kept.to_vec(),
                observed: Vec::new(),
                mean_kept,
                mean_observed,
                gain: DMatrix::zeros(kept.len(), 0),
                cond_cov: symmetrize(&s_aa),
            });
        }
        let s_bb = select_block(cov, observed, observed);
        let s_ba = select_block(cov, observed, kept);
        let (_, chol) = ensure_positive_definite(&symmetrize(&s_bb))?;
        let gain = chol.solve(&s_ba).transpose();
        if gain.iter().any(|v| !v.is_finite()) {
            return Err(AbcError::SingularConditioning);
        }
        let cond_cov = symmetrize(&(s_aa - &gain * s_ba));
        Ok(Self {
            kept: kept.to_vec(),
            observed: observed.to_vec(),
            mean_kept,
            mean_observed,
            gain,
            cond_cov,
        })
    }

    /// Regression matrix `S_AB S_BB^-1`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Conditional covariance before any positive-definiteness repair.
    pub fn raw_cov(&self) -> &DMatrix<f64> {
        &self.cond_cov
    }

    pub fn conditional_mean(&self, observed_values: &DVector<f64>) -> Result<DVector<f64>> {
        if observed_values.len() != self.observed.len() {
            return Err(AbcError::DimensionMismatch(format!(
                "expected {} observed values, got {}",
                self.observed.len(),
                observed_values.len()
            )));
        }
        Ok(&self.mean_kept + &self.gain * (observed_values - &self.mean_observed))
    }

    pub fn condition(&self, observed_values: &DVector<f64>) -> Result<ConditionalGaussian> {
        let mean = self.conditional_mean(observed_values)?;
        let (cov, _) = ensure_positive_definite(&self.cond_cov)?;
        Ok(ConditionalGaussian { mean, cov })
    }
}

/// Conditional distribution of coordinates `kept` given `observed = values`.
pub fn condition_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    kept: &[usize],
    observed: &[usize],
    values: &DVector<f64>,
) -> Result<ConditionalGaussian> {
    GaussianConditioner::new(mean, cov, kept, observed)?.condition(values)
}
