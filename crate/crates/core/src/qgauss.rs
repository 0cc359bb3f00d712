//! Bounded-support q-Gaussian laws, their escort (associated) laws and the
//! closed-form radial moments.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Matrix};
use crate::special::ln_gamma;

/// Values of q in `(1 - Q_GAP, 1)` are rejected.
pub const Q_GAP: f64 = 1e-8;

/// Relative disagreement between the two closed forms of R² that is tolerated.
const RADIUS_FORM_TOL: f64 = 1e-10;

/// Shape exponent `m = 1/(1 − q)` for an admissible `q < 1`.
pub fn shape_m(q: f64) -> Result<f64> {
    check_q(q)?;
    if q == 1.0 {
        return Err(Error::GaussianLimit { operation: "shape exponent m" });
    }
    Ok(1.0 / (1.0 - q))
}

fn check_q(q: f64) -> Result<()> {
    if !q.is_finite() {
        return Err(Error::NonFinite { what: "q" });
    }
    if q > 1.0 {
        return Err(Error::HeavyTailedRegime { q });
    }
    if q > 1.0 - Q_GAP && q < 1.0 {
        return Err(Error::QTooCloseToOne { q });
    }
    Ok(())
}

/// log R² from the compact form `R² = [(2m)^m Z]^{2/(2m+D)}`,
/// `Z = Γ(D/2 + m + 1) / (π^{D/2} Γ(m + 1))`.
fn log_radius_sq_compact(m: f64, dim: usize) -> f64 {
    let d = dim as f64;
    let log_z = ln_gamma(0.5 * d + m + 1.0) - 0.5 * d * libm::log(PI) - ln_gamma(m + 1.0);
    let log_inner = m * libm::log(2.0 * m) + log_z;
    2.0 / (2.0 * m + d) * log_inner
}

/// log R² written directly in q:
/// `[Γ(D/2 + (2−q)/(1−q)) / (π^{D/2} Γ((2−q)/(1−q))) · (2/(1−q))^{1/(1−q)}]^{2(1−q)/(2+D(1−q))}`.
fn log_radius_sq_expanded(q: f64, dim: usize) -> f64 {
    let d = dim as f64;
    let a = (2.0 - q) / (1.0 - q);
    let log_inner = ln_gamma(0.5 * d + a) - 0.5 * d * libm::log(PI) - ln_gamma(a)
        + libm::log(2.0 / (1.0 - q)) / (1.0 - q);
    2.0 * (1.0 - q) / (2.0 + d * (1.0 - q)) * log_inner
}

/// Squared support radius R²(q, D). Evaluated in log space, so it stays finite
/// for very large D.
pub fn radius_sq(q: f64, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::EmptyDimension);
    }
    let m = shape_m(q)?;
    let expanded = libm::exp(log_radius_sq_expanded(q, dim));
    let compact = libm::exp(log_radius_sq_compact(m, dim));
    if libm::fabs(expanded - compact) > RADIUS_FORM_TOL * compact {
        return Err(Error::RadiusFormsDisagree { compact, expanded });
    }
    Ok(expanded)
}

/// Log normalizer of the standardized (Σ = I) Pearson II law with density
/// `c · (R² − |z|²)^e` on the ball of radius R.
pub fn log_pearson_normalizer(dim: usize, exponent: f64, radius_sq: f64) -> f64 {
    let h = 0.5 * dim as f64;
    ln_gamma(h + exponent + 1.0)
        - h * libm::log(PI)
        - ln_gamma(exponent + 1.0)
        - (h + exponent) * libm::log(radius_sq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// q < 1: support `s(x) < radius_sq`, generator exponent `m`.
    Bounded { m: f64, radius_sq: f64 },
    /// q = 1: the multivariate normal N(μ, Σ).
    Gaussian,
}

/// Log-density result that keeps boundary hits apart from underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDensity {
    Inside(f64),
    OutsideSupport,
}

impl LogDensity {
    /// The log-density, with `-inf` outside the support.
    pub fn value(self) -> f64 {
        match self {
            LogDensity::Inside(v) => v,
            LogDensity::OutsideSupport => f64::NEG_INFINITY,
        }
    }

    pub fn is_inside(self) -> bool {
        matches!(self, LogDensity::Inside(_))
    }
}

/// Radial shape of an elliptical law in whitened coordinates `z = L⁻¹(x − μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    /// Standardized density `exp(log_norm) · (R² − t)^exponent` for `t = |z|² < R²`.
    Bounded { radius_sq: f64, exponent: f64, log_norm: f64 },
    /// Standard normal.
    Gaussian,
}

impl RadialProfile {
    /// Standardized density as a function of t = |z|².
    pub fn density(&self, dim: usize, t: f64) -> f64 {
        match *self {
            RadialProfile::Bounded { radius_sq, exponent, log_norm } => {
                if t >= radius_sq {
                    0.0
                } else {
                    libm::exp(log_norm + exponent * libm::log(radius_sq - t))
                }
            }
            RadialProfile::Gaussian => {
                libm::exp(-0.5 * dim as f64 * libm::log(2.0 * PI) - 0.5 * t)
            }
        }
    }
}

/// Common view used by the quadrature oracle.
pub trait EllipticalLaw {
    fn dim(&self) -> usize;
    fn location(&self) -> &[f64];
    fn factor(&self) -> &LowerTriangular;
    fn profile(&self) -> RadialProfile;
}

/// Bounded-support q-Gaussian `N_q(μ, Σ)`, or the normal `N(μ, Σ)` when `q = 1`.
///
/// Derived quantities (shape `m`, radius, normalizer) are computed once at
/// construction and the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct QGaussian {
    mu: Vec<f64>,
    factor: LowerTriangular,
    q: f64,
    regime: Regime,
    log_det_sigma: f64,
    log_normalizer: f64,
}

impl QGaussian {
    pub fn new(mu: Vec<f64>, factor: LowerTriangular, q: f64) -> Result<Self> {
        let dim = mu.len();
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        if factor.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: factor.dim() });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "location" });
        }
        check_q(q)?;
        let log_det_sigma = factor.log_det_sigma();
        let (regime, log_normalizer) = if q == 1.0 {
            let ln = -0.5 * dim as f64 * libm::log(2.0 * PI) - 0.5 * log_det_sigma;
            (Regime::Gaussian, ln)
        } else {
            let m = 1.0 / (1.0 - q);
            let r2 = radius_sq(q, dim)?;
            let ln = log_pearson_normalizer(dim, m, r2) - 0.5 * log_det_sigma;
            (Regime::Bounded { m, radius_sq: r2 }, ln)
        };
        Ok(QGaussian { mu, factor, q, regime, log_det_sigma, log_normalizer })
    }

    /// Builds the law from a dense symmetric scale matrix Σ (Cholesky-factored).
    pub fn from_scale_matrix(mu: Vec<f64>, sigma: &Matrix, q: f64) -> Result<Self> {
        let factor = LowerTriangular::cholesky(sigma)?;
        Self::new(mu, factor, q)
    }

    /// Isotropic law centred at the origin with Σ = I.
    pub fn standard(dim: usize, q: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        Self::new(alloc::vec![0.0; dim], LowerTriangular::identity(dim), q)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn factor(&self) -> &LowerTriangular {
        &self.factor
    }

    pub fn sigma(&self) -> Matrix {
        self.factor.sigma()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.regime, Regime::Gaussian)
    }

    /// Shape exponent m; `None` in the Gaussian limit.
    pub fn m(&self) -> Option<f64> {
        match self.regime {
            Regime::Bounded { m, .. } => Some(m),
            Regime::Gaussian => None,
        }
    }

    /// R²; infinite in the Gaussian limit.
    pub fn radius_sq(&self) -> f64 {
        match self.regime {
            Regime::Bounded { radius_sq, .. } => radius_sq,
            Regime::Gaussian => f64::INFINITY,
        }
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det_sigma
    }

    /// Writes `z = L⁻¹(x − μ)` and returns `s(x) = |z|²`.
    pub fn whiten(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let n = self.dim();
        let mut centred = [0.0f64; 8];
        if n <= centred.len() {
            for i in 0..n {
                centred[i] = x[i] - self.mu[i];
            }
            self.factor.solve(&centred[..n], z);
        } else {
            let c: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
            self.factor.solve(&c, z);
        }
        z[..n].iter().map(|v| v * v).sum()
    }

    /// Squared Mahalanobis radius s(x).
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut z = alloc::vec![0.0; self.dim()];
        self.whiten(x, &mut z)
    }

    pub fn log_density(&self, x: &[f64]) -> LogDensity {
        debug_assert_eq!(x.len(), self.dim());
        let s = self.quad_form(x);
        self.log_density_at_s(s)
    }

    /// Log-density as a function of the squared radius.
    pub fn log_density_at_s(&self, s: f64) -> LogDensity {
        match self.regime {
            Regime::Gaussian => LogDensity::Inside(self.log_normalizer - 0.5 * s),
            Regime::Bounded { m, radius_sq } => {
                if s >= radius_sq {
                    LogDensity::OutsideSupport
                } else {
                    LogDensity::Inside(self.log_normalizer + m * libm::log(radius_sq - s))
                }
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        libm::exp(self.log_density(x).value())
    }

    /// k-th associated law, density ∝ (R² − s)^{m+k}. `k = 1` is the escort p★.
    pub fn escort(&self, order: u32) -> EscortLaw<'_> {
        let log_normalizer = match self.regime {
            Regime::Gaussian => self.log_normalizer,
            Regime::Bounded { m, radius_sq } => {
                log_pearson_normalizer(self.dim(), m + order as f64, radius_sq)
                    - 0.5 * self.log_det_sigma
            }
        };
        EscortLaw { base: self, order, log_normalizer }
    }

    /// Law of s(x) under the base (order 0) or escort (order 1) law:
    /// `s/R² ~ Beta(D/2, m + 1 + order)`.
    pub fn radial_law(&self, order: u32) -> Result<RadialLaw> {
        if order > 1 {
            return Err(Error::UnsupportedOrder { order });
        }
        match self.regime {
            Regime::Gaussian => Err(Error::GaussianLimit { operation: "radial Beta law" }),
            Regime::Bounded { m, radius_sq } => Ok(RadialLaw {
                alpha: 0.5 * self.dim() as f64,
                beta: m + 1.0 + order as f64,
                radius_sq,
            }),
        }
    }

    /// Closed-form radial moments.
    pub fn moments(&self) -> Moments {
        let d = self.dim() as f64;
        match self.regime {
            Regime::Gaussian => Moments {
                mean_s: d,
                mean_s_escort: d,
                weight_normalizer: None,
                cov_scale: 1.0,
            },
            Regime::Bounded { m, radius_sq } => {
                let mean_s = d * radius_sq / (d + 2.0 * (m + 1.0));
                let mean_s_escort = d * radius_sq / (d + 2.0 * (m + 2.0));
                let weight_normalizer = radius_sq - mean_s;
                debug_assert!(
                    libm::fabs(mean_s / d - weight_normalizer / (2.0 * (m + 1.0)))
                        <= 1e-12 * (mean_s / d)
                );
                Moments {
                    mean_s,
                    mean_s_escort,
                    weight_normalizer: Some(weight_normalizer),
                    cov_scale: mean_s / d,
                }
            }
        }
    }

    /// Cov_p(x) = (E_p[s]/D)·Σ.
    pub fn covariance(&self) -> Matrix {
        let mut c = self.sigma();
        c.scale(self.moments().cov_scale);
        c
    }
}

impl EllipticalLaw for QGaussian {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn location(&self) -> &[f64] {
        &self.mu
    }
    fn factor(&self) -> &LowerTriangular {
        &self.factor
    }
    fn profile(&self) -> RadialProfile {
        match self.regime {
            Regime::Gaussian => RadialProfile::Gaussian,
            Regime::Bounded { m, radius_sq } => RadialProfile::Bounded {
                radius_sq,
                exponent: m,
                log_norm: log_pearson_normalizer(self.dim(), m, radius_sq),
            },
        }
    }
}

/// Closed-form radial moments of a q-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// E_p[s] = D·R²/(D + 2(m + 1))
    pub mean_s: f64,
    /// E_{p★}[s] = D·R²/(D + 2(m + 2))
    pub mean_s_escort: f64,
    /// M = E_p[R² − s]; `None` in the Gaussian limit.
    pub weight_normalizer: Option<f64>,
    /// Cov_p(x) = cov_scale · Σ
    pub cov_scale: f64,
}

/// The k-th associated law of a q-Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct EscortLaw<'a> {
    base: &'a QGaussian,
    order: u32,
    log_normalizer: f64,
}

impl<'a> EscortLaw<'a> {
    pub fn base(&self) -> &'a QGaussian {
        self.base
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Generator exponent m + k; `None` in the Gaussian limit.
    pub fn exponent(&self) -> Option<f64> {
        self.base.m().map(|m| m + self.order as f64)
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn log_density(&self, x: &[f64]) -> LogDensity {
        let s = self.base.quad_form(x);
        self.log_density_at_s(s)
    }

    pub fn log_density_at_s(&self, s: f64) -> LogDensity {
        match self.base.regime {
            Regime::Gaussian => self.base.log_density_at_s(s),
            Regime::Bounded { m, radius_sq } => {
                if s >= radius_sq {
                    LogDensity::OutsideSupport
                } else {
                    let e = m + self.order as f64;
                    LogDensity::Inside(self.log_normalizer + e * libm::log(radius_sq - s))
                }
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        libm::exp(self.log_density(x).value())
    }
}

impl EllipticalLaw for EscortLaw<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn location(&self) -> &[f64] {
        &self.base.mu
    }
    fn factor(&self) -> &LowerTriangular {
        &self.base.factor
    }
    fn profile(&self) -> RadialProfile {
        match self.base.regime {
            Regime::Gaussian => RadialProfile::Gaussian,
            Regime::Bounded { m, radius_sq } => {
                let e = m + self.order as f64;
                RadialProfile::Bounded {
                    radius_sq,
                    exponent: e,
                    log_norm: log_pearson_normalizer(self.base.dim(), e, radius_sq),
                }
            }
        }
    }
}

/// Scaled Beta law of the squared radius: `s = R²·b`, `b ~ Beta(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialLaw {
    pub alpha: f64,
    pub beta: f64,
    pub radius_sq: f64,
}

impl RadialLaw {
    /// E[s] = R²·α/(α + β)
    pub fn mean(&self) -> f64 {
        self.radius_sq * self.alpha / (self.alpha + self.beta)
    }

    /// Var[s] = R⁴·αβ/((α + β)²(α + β + 1))
    pub fn variance(&self) -> f64 {
        let ab = self.alpha + self.beta;
        self.radius_sq * self.radius_sq * self.alpha * self.beta / (ab * ab * (ab + 1.0))
    }
}

#[cfg(feature = "serde")]
mod serde_impl {
    use super::*;
    use serde::{Deserialize, Serialize};

    /// On-disk form. Derived fields are never stored and are recomputed on load.
    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct QGaussianRecord {
        pub mu: Vec<f64>,
        pub sigma_factor_rows: Vec<Vec<f64>>,
        pub q: f64,
    }

    impl From<&QGaussian> for QGaussianRecord {
        fn from(p: &QGaussian) -> Self {
            QGaussianRecord { mu: p.mu.clone(), sigma_factor_rows: p.factor.rows(), q: p.q }
        }
    }

    impl TryFrom<QGaussianRecord> for QGaussian {
        type Error = Error;
        fn try_from(r: QGaussianRecord) -> Result<Self> {
            let factor = LowerTriangular::from_rows(&r.sigma_factor_rows)?;
            QGaussian::new(r.mu, factor, r.q)
        }
    }

    impl Serialize for QGaussian {
        fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            QGaussianRecord::from(self).serialize(s)
        }
    }

    impl<'de> Deserialize<'de> for QGaussian {
        fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            let rec = QGaussianRecord::deserialize(d)?;
            QGaussian::try_from(rec).map_err(serde::de::Error::custom)
        }
    }
}

#[cfg(feature = "serde")]
pub use serde_impl::QGaussianRecord;
