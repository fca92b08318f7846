//! Univariate marginal families, the standard normal and Student t helpers,
//! and multivariate Gaussian / t distributions.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, beta::inv_beta_reg, erf, gamma::ln_gamma};

use crate::stats::ensure_positive_definite;
use crate::{AbcError, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Degrees of freedom used for t marginals and t copulas when none is configured.
pub const DEFAULT_DOF: f64 = 5.0;

pub fn std_normal_logpdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / SQRT_2)
}

pub fn std_normal_inv_cdf(p: f64) -> f64 {
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

fn t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
}

/// Log density of the standard Student t with `nu` degrees of freedom.
pub fn t_logpdf_1d(nu: f64, x: f64) -> f64 {
    t_log_norm(nu) - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

/// Lower-tail probability `P(T <= -|x|)`, accurate far into the tail.
fn t_tail(nu: f64, x: f64) -> f64 {
    let x2 = x * x;
    if x2 < nu {
        0.5 - 0.5 * beta_reg(0.5, 0.5 * nu, x2 / (nu + x2))
    } else {
        0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x2))
    }
}

/// CDF of the standard Student t.
pub fn t_cdf_1d(nu: f64, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = t_tail(nu, x);
    if x <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn t_sf_1d(nu: f64, x: f64) -> f64 {
    t_cdf_1d(nu, -x)
}

/// Quantile function of the standard Student t.
///
/// Closed forms for `nu = 1, 2`; otherwise an incomplete-beta inversion
/// polished by safeguarded Newton steps on the lower tail.
pub fn t_inv_cdf_1d(nu: f64, u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) || u.is_nan() {
        return f64::NAN;
    }
    if u == 0.0 {
        return f64::NEG_INFINITY;
    }
    if u == 1.0 {
        return f64::INFINITY;
    }
    if u == 0.5 {
        return 0.0;
    }
    if nu == 1.0 {
        return (PI * (u - 0.5)).tan();
    }
    if nu == 2.0 {
        return (2.0 * u - 1.0) / (2.0 * u * (1.0 - u)).sqrt();
    }
    let (p, sign) = if u < 0.5 { (u, -1.0) } else { (1.0 - u, 1.0) };
    // P(T <= -x) = p  <=>  I_{nu/(nu+x^2)}(nu/2, 1/2) = 2p
    let z = inv_beta_reg(0.5 * nu, 0.5, 2.0 * p);
    let mut x = if z > 0.0 && z < 1.0 {
        -(nu * (1.0 / z - 1.0)).sqrt()
    } else {
        std_normal_inv_cdf(p)
    };
    if !x.is_finite() {
        x = std_normal_inv_cdf(p);
    }
    // Newton on log F(x) = log p over x < 0.
    let target = p.ln();
    for _ in 0..20 {
        let f = t_tail(nu, x);
        if f <= 0.0 {
            break;
        }
        let g = f.ln() - target;
        let slope = (t_logpdf_1d(nu, x) - f.ln()).exp();
        let mut next = x - g / slope;
        if !next.is_finite() || next > 0.0 {
            next = 0.5 * x;
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-14 * x.abs().max(1.0) {
            break;
        }
    }
    sign * x.abs()
}

/// The six moment-matched marginal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Triangular,
    #[serde(alias = "t", alias = "student_t", alias = "location-scale-t")]
    LocationScaleT,
    Logistic,
    Gumbel,
    Uniform,
    Normal,
}

impl MarginalKind {
    pub const ALL: [MarginalKind; 6] = [
        MarginalKind::Triangular,
        MarginalKind::LocationScaleT,
        MarginalKind::Logistic,
        MarginalKind::Gumbel,
        MarginalKind::Uniform,
        MarginalKind::Normal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MarginalKind::Triangular => "triangular",
            MarginalKind::LocationScaleT => "location_scale_t",
            MarginalKind::Logistic => "logistic",
            MarginalKind::Gumbel => "gumbel",
            MarginalKind::Uniform => "uniform",
            MarginalKind::Normal => "normal",
        }
    }
}

/// A univariate continuous distribution with closed-form cdf and quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalFamily {
    Triangular { a: f64, b: f64, c: f64 },
    LocationScaleT { mu: f64, sigma: f64, nu: f64 },
    Logistic { mu: f64, s: f64 },
    /// Maximum-type Gumbel with `F(x) = exp(-exp(-(x - loc) / scale))`.
    Gumbel { loc: f64, scale: f64 },
    Uniform { a: f64, b: f64 },
    Normal { mu: f64, var: f64 },
}

/// Parameters of `kind` with mean `m` and variance `v`.
///
/// The Gumbel mapping uses `mean = loc + scale * gamma_E` and
/// `var = pi^2 scale^2 / 6`.
pub fn params_from_moments(kind: MarginalKind, m: f64, v: f64, nu: Option<f64>) -> Result<MarginalFamily> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(AbcError::InvalidVariance(v));
    }
    if !m.is_finite() {
        return Err(AbcError::InvalidParameter(format!("non-finite mean {m}")));
    }
    Ok(match kind {
        MarginalKind::LocationScaleT => {
            let nu = nu.unwrap_or(DEFAULT_DOF);
            if !(nu > 2.0 && nu.is_finite()) {
                return Err(AbcError::InvalidDof(nu));
            }
            MarginalFamily::LocationScaleT {
                mu: m,
                sigma: ((nu - 2.0) * v / nu).sqrt(),
                nu,
            }
        }
        MarginalKind::Logistic => MarginalFamily::Logistic {
            mu: m,
            s: (3.0 * v).sqrt() / PI,
        },
        MarginalKind::Normal => MarginalFamily::Normal { mu: m, var: v },
        MarginalKind::Triangular => {
            let h = (6.0 * v).sqrt();
            MarginalFamily::Triangular { a: m - h, b: m + h, c: m }
        }
        MarginalKind::Uniform => {
            let h = (3.0 * v).sqrt();
            MarginalFamily::Uniform { a: m - h, b: m + h }
        }
        MarginalKind::Gumbel => {
            let scale = (6.0 * v).sqrt() / PI;
            MarginalFamily::Gumbel {
                loc: m - scale * EULER_GAMMA,
                scale,
            }
        }
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl MarginalFamily {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AbcError::InvalidParameter(msg));
        match *self {
            MarginalFamily::Triangular { a, b, c } => {
                if !(a < b && a <= c && c <= b) {
                    return bad(format!("triangular needs a <= c <= b, a < b (got {a}, {c}, {b})"));
                }
            }
            MarginalFamily::LocationScaleT { sigma, nu, .. } => {
                if !(sigma > 0.0) {
                    return bad(format!("t scale must be positive, got {sigma}"));
                }
                if !(nu > 2.0) {
                    return Err(AbcError::InvalidDof(nu));
                }
            }
            MarginalFamily::Logistic { s, .. } if !(s > 0.0) => return bad(format!("logistic scale {s}")),
            MarginalFamily::Gumbel { scale, .. } if !(scale > 0.0) => {
                return bad(format!("gumbel scale {scale}"))
            }
            MarginalFamily::Uniform { a, b } if !(a < b) => return bad(format!("uniform needs a < b ({a}, {b})")),
            MarginalFamily::Normal { var, .. } if !(var > 0.0) => return Err(AbcError::InvalidVariance(var)),
            _ => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> MarginalKind {
        match self {
            MarginalFamily::Triangular { .. } => MarginalKind::Triangular,
            MarginalFamily::LocationScaleT { .. } => MarginalKind::LocationScaleT,
            MarginalFamily::Logistic { .. } => MarginalKind::Logistic,
            MarginalFamily::Gumbel { .. } => MarginalKind::Gumbel,
            MarginalFamily::Uniform { .. } => MarginalKind::Uniform,
            MarginalFamily::Normal { .. } => MarginalKind::Normal,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalFamily::Triangular { a, b, c } => (a + b + c) / 3.0,
            MarginalFamily::LocationScaleT { mu, .. } => mu,
            MarginalFamily::Logistic { mu, .. } => mu,
            MarginalFamily::Gumbel { loc, scale } => loc + scale * EULER_GAMMA,
            MarginalFamily::Uniform { a, b } => 0.5 * (a + b),
            MarginalFamily::Normal { mu, .. } => mu,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MarginalFamily::Triangular { a, b, c } => (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0,
            MarginalFamily::LocationScaleT { sigma, nu, .. } => sigma * sigma * nu / (nu - 2.0),
            MarginalFamily::Logistic { s, .. } => s * s * PI * PI / 3.0,
            MarginalFamily::Gumbel { scale, .. } => PI * PI * scale * scale / 6.0,
            MarginalFamily::Uniform { a, b } => (b - a).powi(2) / 12.0,
            MarginalFamily::Normal { var, .. } => var,
        }
    }

    /// `(lower, upper)` support bounds.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            MarginalFamily::Triangular { a, b, .. } | MarginalFamily::Uniform { a, b } => (a, b),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        match *self {
            MarginalFamily::Triangular { a, b, c } => {
                if x < a || x > b {
                    f64::NEG_INFINITY
                } else if x < c {
                    (2.0 * (x - a) / ((b - a) * (c - a))).ln()
                } else if x > c {
                    (2.0 * (b - x) / ((b - a) * (b - c))).ln()
                } else {
                    (2.0 / (b - a)).ln()
                }
            }
            MarginalFamily::LocationScaleT { mu, sigma, nu } => t_logpdf_1d(nu, (x - mu) / sigma) - sigma.ln(),
            MarginalFamily::Logistic { mu, s } => {
                let z = (x - mu) / s;
                -z - s.ln() - 2.0 * softplus(-z)
            }
            MarginalFamily::Gumbel { loc, scale } => {
                let z = (x - loc) / scale;
                -scale.ln() - z - (-z).exp()
            }
            MarginalFamily::Uniform { a, b } => {
                if x < a || x > b {
                    f64::NEG_INFINITY
                } else {
                    -(b - a).ln()
                }
            }
            MarginalFamily::Normal { mu, var } => {
                let sd = var.sqrt();
                std_normal_logpdf((x - mu) / sd) - sd.ln()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    /// `(F(x), 1 - F(x))`, each computed directly so neither tail loses precision.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        match *self {
            MarginalFamily::Triangular { a, b, c } => {
                if x <= a {
                    (0.0, 1.0)
                } else if x >= b {
                    (1.0, 0.0)
                } else if x <= c {
                    let f = (x - a).powi(2) / ((b - a) * (c - a));
                    (f, 1.0 - f)
                } else {
                    let s = (b - x).powi(2) / ((b - a) * (b - c));
                    (1.0 - s, s)
                }
            }
            MarginalFamily::LocationScaleT { mu, sigma, nu } => {
                let z = (x - mu) / sigma;
                (t_cdf_1d(nu, z), t_sf_1d(nu, z))
            }
            MarginalFamily::Logistic { mu, s } => {
                let z = (x - mu) / s;
                (1.0 / (1.0 + (-z).exp()), 1.0 / (1.0 + z.exp()))
            }
            MarginalFamily::Gumbel { loc, scale } => {
                let z = (x - loc) / scale;
                let e = (-z).exp();
                ((-e).exp(), -(-e).exp_m1())
            }
            MarginalFamily::Uniform { a, b } => {
                let f = ((x - a) / (b - a)).clamp(0.0, 1.0);
                (f, ((b - x) / (b - a)).clamp(0.0, 1.0))
            }
            MarginalFamily::Normal { mu, var } => {
                let z = (x - mu) / var.sqrt();
                (std_normal_cdf(z), std_normal_sf(z))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    pub fn inv_cdf(&self, u: f64) -> f64 {
        match *self {
            MarginalFamily::Triangular { a, b, c } => {
                let split = (c - a) / (b - a);
                if u < split {
                    a + (u * (b - a) * (c - a)).sqrt()
                } else {
                    b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
                }
            }
            MarginalFamily::LocationScaleT { mu, sigma, nu } => mu + sigma * t_inv_cdf_1d(nu, u),
            MarginalFamily::Logistic { mu, s } => mu + s * (u / (1.0 - u)).ln(),
            MarginalFamily::Gumbel { loc, scale } => loc - scale * (-u.ln()).ln(),
            MarginalFamily::Uniform { a, b } => a + u * (b - a),
            MarginalFamily::Normal { mu, var } => mu + var.sqrt() * std_normal_inv_cdf(u),
        }
    }

    /// Inverse-CDF transform of a uniform draw.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        self.inv_cdf(u)
    }

    /// `Phi^-1(F(x))`, evaluated through whichever tail is smaller. Exact for
    /// normal marginals.
    pub fn normal_score(&self, x: f64) -> f64 {
        if let MarginalFamily::Normal { mu, var } = *self {
            return (x - mu) / var.sqrt();
        }
        let (f, s) = self.cdf_sf(x);
        if f <= s {
            std_normal_inv_cdf(f.max(f64::MIN_POSITIVE))
        } else {
            -std_normal_inv_cdf(s.max(f64::MIN_POSITIVE))
        }
    }

    /// `F_{t,nu}^-1(F(x))`, evaluated through whichever tail is smaller. Exact
    /// for location-scale t marginals with the same `nu`.
    pub fn t_score(&self, nu: f64, x: f64) -> f64 {
        if let MarginalFamily::LocationScaleT { mu, sigma, nu: own } = *self {
            if own == nu {
                return (x - mu) / sigma;
            }
        }
        let (f, s) = self.cdf_sf(x);
        if f <= s {
            t_inv_cdf_1d(nu, f.max(f64::MIN_POSITIVE))
        } else {
            -t_inv_cdf_1d(nu, s.max(f64::MIN_POSITIVE))
        }
    }
}

pub fn marginal_sample(f: &MarginalFamily, u: f64) -> f64 {
    f.sample_from_uniform(u)
}

pub fn marginal_logpdf(f: &MarginalFamily, x: f64) -> f64 {
    f.logpdf(x)
}

pub fn marginal_cdf(f: &MarginalFamily, x: f64) -> f64 {
    f.cdf(x)
}

fn standard_normal_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

/// Multivariate Gaussian with a cached lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvGaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_det: f64,
}

impl MvGaussian {
    /// Builds the distribution, repairing `cov` to positive definite if needed.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(AbcError::DimensionMismatch(format!(
                "mean length {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let (cov, chol) = ensure_positive_definite(&cov)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol_l,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(self.dim(), rng);
        &self.mean + &self.chol_l * z
    }

    /// Log density at `x`, for a Gaussian with the same covariance re-centred
    /// at `center`.
    pub fn logpdf_centered(&self, center: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let mut diff = x - center;
        if !self.chol_l.solve_lower_triangular_mut(&mut diff) {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.dim() as f64 * (2.0 * PI).ln() - 0.5 * self.log_det - 0.5 * diff.norm_squared()
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> f64 {
        self.logpdf_centered(&self.mean, x)
    }
}

pub fn mvn_sample<R: Rng + ?Sized>(g: &MvGaussian, rng: &mut R) -> DVector<f64> {
    g.sample(rng)
}

pub fn mvn_logpdf(g: &MvGaussian, x: &DVector<f64>) -> f64 {
    g.logpdf(x)
}

/// Multivariate Student t with location, scale matrix and `nu` degrees of freedom.
#[derive(Debug, Clone)]
pub struct MvStudentT {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_det: f64,
    nu: f64,
}

impl MvStudentT {
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(AbcError::InvalidDof(nu));
        }
        if scale.nrows() != mean.len() || scale.ncols() != mean.len() {
            return Err(AbcError::DimensionMismatch("t scale matrix does not match mean".into()));
        }
        let (_, chol) = ensure_positive_definite(&scale)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            chol_l,
            log_det,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// `mean + L z sqrt(nu / w)` with `z ~ N(0, I)` and `w ~ chi^2_nu`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(self.dim(), rng);
        let w: f64 = ChiSquared::new(self.nu).expect("nu validated").sample(rng);
        &self.mean + (&self.chol_l * z) * (self.nu / w).sqrt()
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let mut diff = x - &self.mean;
        if !self.chol_l.solve_lower_triangular_mut(&mut diff) {
            return f64::NEG_INFINITY;
        }
        let q = diff.norm_squared();
        ln_gamma(0.5 * (self.nu + d)) - ln_gamma(0.5 * self.nu) - 0.5 * d * (self.nu * PI).ln() - 0.5 * self.log_det
            - 0.5 * (self.nu + d) * (q / self.nu).ln_1p()
    }
}

pub fn mvt_sample<R: Rng + ?Sized>(t: &MvStudentT, rng: &mut R) -> DVector<f64> {
    t.sample(rng)
}

pub fn mvt_logpdf(t: &MvStudentT, x: &DVector<f64>) -> f64 {
    t.logpdf(x)
}
