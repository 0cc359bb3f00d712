//! Monte Carlo evaluators of the q-Gaussian Stein identity and the pathwise
//! gradient estimators built on it.
//!
//! Every estimator averages per-draw contributions. Contributions are
//! accumulated per fixed-size chunk and the chunk partials are merged in chunk
//! order, so an estimate depends only on its inputs and seed. Estimators that
//! take `(count, seed)` stream their draws without storing them and return
//! exactly what the `*_on` variant returns for `sampler::sample(.., count, seed, ..)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::battery::TestFunction;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::{LowerTriangular, Matrix};
use crate::qgauss::QGaussian;
use crate::rng::{chunk_count, CHUNK_LEN};
use crate::sampler::{PointSampler, SampleBatch, Source};
use crate::stats::{merge_in_order, RunningStats};

/// Default for the uncertified universal constant in the operator-norm bound.
pub const DEFAULT_C3: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// E_p[(x − μ) f(x)]
    SteinLhs,
    /// Cov_p · E_{p★}[∇f] from escort draws
    SteinRhsEscort,
    /// Cov_p · E_p[(R² − s)∇f]/M from base draws
    SteinRhsReweighted,
    /// ∇_μ E_p[f] = E_p[∇f]
    QBonnet,
    /// ∇_Σ E_p[f] = (E_p[s]/D)·½·E_{p★}[∇²f]
    QPrice,
    /// ĝ = mean[(R² − s)∇t]/M
    ReweightedGradient,
    /// Ĥ = mean[(R² − s)∇²f]/M
    ReweightedHessian,
    /// Gaussian Bonnet: E_N[∇f]
    GaussianBonnet,
    /// Gaussian Price: ½·E_N[∇²f]
    GaussianPrice,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::SteinLhs => "stein_lhs",
            EstimatorKind::SteinRhsEscort => "stein_rhs_escort",
            EstimatorKind::SteinRhsReweighted => "stein_rhs_p_only",
            EstimatorKind::QBonnet => "q_bonnet",
            EstimatorKind::QPrice => "q_price",
            EstimatorKind::ReweightedGradient => "prop_grad",
            EstimatorKind::ReweightedHessian => "prop_hess",
            EstimatorKind::GaussianBonnet => "gaussian_bonnet",
            EstimatorKind::GaussianPrice => "gaussian_price",
        }
    }
}

/// Right-hand-side form of the Stein identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteinVariant {
    /// cov_scale·Σ·mean ∇f over an escort batch.
    EscortBatch,
    /// cov_scale·Σ·mean[(R² − s)∇f]/M over a base batch.
    POnlyReweighted,
}

/// Which reweighted estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reweighted {
    Gradient,
    Hessian,
}

/// Which Gaussian baseline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Location,
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Vector,
    Matrix,
}

/// Uncertified operator-norm deviation bound `C₃·R²C₂/M·√(log D / S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNormDiagnostic {
    pub c3: f64,
    pub value: f64,
}

/// Theoretical variance bounds of the reweighted estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    /// Bound on the variance of every entry: (1/S)(R²C/M)².
    pub per_entry: f64,
    /// Bound on E‖Ĥ − E Ĥ‖²_F (Hessian estimator only).
    pub frobenius: Option<f64>,
    pub op_norm: Option<OpNormDiagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub estimator: EstimatorKind,
    pub dim: usize,
    pub shape: ValueShape,
    /// Vector of length D, or row-major D×D matrix.
    pub value: Vec<f64>,
    /// Empirical variance of the per-draw contributions, entrywise.
    pub per_entry_variance: Vec<f64>,
    pub bound: Option<VarianceBound>,
    pub samples: usize,
    pub seed: u64,
}

impl GradEstimate {
    /// Standard error of each entry of `value`.
    pub fn std_error(&self) -> Vec<f64> {
        let n = self.samples as f64;
        self.per_entry_variance.iter().map(|v| libm::sqrt(v / n)).collect()
    }

    pub fn value_matrix(&self) -> Option<Matrix> {
        match self.shape {
            ValueShape::Matrix => Matrix::from_row_major(self.dim, self.value.clone()).ok(),
            ValueShape::Vector => None,
        }
    }

    fn from_stats(
        estimator: EstimatorKind,
        dim: usize,
        shape: ValueShape,
        stats: RunningStats,
        seed: u64,
    ) -> Self {
        let mut value = stats.mean().to_vec();
        if shape == ValueShape::Matrix {
            symmetrize(&mut value, dim);
        }
        GradEstimate {
            estimator,
            dim,
            shape,
            value,
            per_entry_variance: stats.variance(),
            bound: None,
            samples: stats.count(),
            seed,
        }
    }
}

fn symmetrize(v: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (v[i * n + j] + v[j * n + i]);
            v[i * n + j] = a;
            v[j * n + i] = a;
        }
    }
}

/// Per-chunk scratch passed to contribution closures.
struct Scratch {
    grad: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch { grad: vec![0.0; d] }
    }
}

fn reduce_stream<E, F>(
    exec: &E,
    sampler: &PointSampler<'_>,
    count: usize,
    seed: u64,
    width: usize,
    contrib: F,
) -> RunningStats
where
    E: Executor,
    F: Fn(&[f64], f64, &mut Scratch, &mut [f64]) + Sync + Send,
{
    let d = sampler.law().dim();
    let parts = exec.map_indexed(chunk_count(count), |c| {
        let mut stats = RunningStats::new(width);
        let mut out = vec![0.0; width];
        let mut scratch = Scratch::new(d);
        sampler.visit_chunk(seed, c, count, |x, s| {
            contrib(x, s, &mut scratch, &mut out);
            stats.push(&out);
        });
        stats
    });
    merge_in_order(width, &parts)
}

fn reduce_batch<E, F>(exec: &E, batch: &SampleBatch, width: usize, contrib: F) -> RunningStats
where
    E: Executor,
    F: Fn(&[f64], f64, &mut Scratch, &mut [f64]) + Sync + Send,
{
    let d = batch.dim();
    let count = batch.len();
    let parts = exec.map_indexed(chunk_count(count), |c| {
        let mut stats = RunningStats::new(width);
        let mut out = vec![0.0; width];
        let mut scratch = Scratch::new(d);
        let end = ((c + 1) * CHUNK_LEN).min(count);
        for k in c * CHUNK_LEN..end {
            contrib(batch.point(k), batch.s_values()[k], &mut scratch, &mut out);
            stats.push(&out);
        }
        stats
    });
    merge_in_order(width, &parts)
}

/// Where the draws of an estimator come from.
enum Draws<'a> {
    Stream { count: usize, seed: u64 },
    Batch(&'a SampleBatch),
}

impl Draws<'_> {
    fn seed(&self) -> u64 {
        match self {
            Draws::Stream { seed, .. } => *seed,
            Draws::Batch(b) => b.seed(),
        }
    }

    fn run<E, F>(&self, exec: &E, law: &QGaussian, source: Source, width: usize, contrib: F) -> Result<RunningStats>
    where
        E: Executor,
        F: Fn(&[f64], f64, &mut Scratch, &mut [f64]) + Sync + Send,
    {
        match *self {
            Draws::Stream { count, seed } => {
                if count == 0 {
                    return Err(Error::EmptySample);
                }
                let sampler = PointSampler::new(law, source);
                Ok(reduce_stream(exec, &sampler, count, seed, width, contrib))
            }
            Draws::Batch(batch) => {
                check_batch(law, batch, source)?;
                Ok(reduce_batch(exec, batch, width, contrib))
            }
        }
    }
}

fn check_batch(law: &QGaussian, batch: &SampleBatch, wanted: Source) -> Result<()> {
    if batch.dim() != law.dim() {
        return Err(Error::DimensionMismatch { expected: law.dim(), found: batch.dim() });
    }
    if batch.is_empty() {
        return Err(Error::EmptySample);
    }
    // the Gaussian limit has p★ = p, and its sampler always reports base draws
    let wanted = if law.is_gaussian() { Source::Base } else { wanted };
    if batch.source() != wanted {
        return Err(Error::SourceMismatch { expected: wanted.name(), found: batch.source().name() });
    }
    Ok(())
}

fn check_fn(law: &QGaussian, f: &dyn TestFunction) -> Result<()> {
    if f.dim() != law.dim() {
        return Err(Error::DimensionMismatch { expected: law.dim(), found: f.dim() });
    }
    Ok(())
}

fn require_hessian(f: &dyn TestFunction) -> Result<()> {
    if f.has_hessian() {
        Ok(())
    } else {
        Err(Error::MissingDerivative { what: "Hessian" })
    }
}

/// Bounded-support constants (R², M); errors in the Gaussian limit.
fn support_constants(law: &QGaussian, operation: &'static str) -> Result<(f64, f64)> {
    match law.moments().weight_normalizer {
        Some(m) => Ok((law.radius_sq(), m)),
        None => Err(Error::GaussianLimit { operation }),
    }
}

/// Monte Carlo average of (x − μ)·f(x) over a base batch.
pub fn stein_lhs<E: Executor>(
    law: &QGaussian,
    f: &dyn TestFunction,
    batch: &SampleBatch,
    exec: &E,
) -> Result<GradEstimate> {
    check_fn(law, f)?;
    let d = law.dim();
    let mu = law.mu();
    let stats = Draws::Batch(batch).run(exec, law, Source::Base, d, |x, _, _, out| {
        let fx = f.value(x);
        for i in 0..d {
            out[i] = (x[i] - mu[i]) * fx;
        }
    })?;
    Ok(GradEstimate::from_stats(EstimatorKind::SteinLhs, d, ValueShape::Vector, stats, batch.seed()))
}

/// Right-hand side of the Stein identity in either sampling form.
pub fn stein_rhs<E: Executor>(
    law: &QGaussian,
    f: &dyn TestFunction,
    variant: SteinVariant,
    batch: &SampleBatch,
    exec: &E,
) -> Result<GradEstimate> {
    check_fn(law, f)?;
    let d = law.dim();
    let mut cov = law.sigma();
    cov.scale(law.moments().cov_scale);
    let cov = &cov;
    let (kind, stats) = match variant {
        SteinVariant::EscortBatch => {
            let stats = Draws::Batch(batch).run(exec, law, Source::Escort, d, |x, _, sc, out| {
                f.gradient(x, &mut sc.grad);
                cov.mul_vec(&sc.grad, out);
            })?;
            (EstimatorKind::SteinRhsEscort, stats)
        }
        SteinVariant::POnlyReweighted => {
            let (r2, big_m) = support_constants(law, "reweighted Stein identity")?;
            let stats = Draws::Batch(batch).run(exec, law, Source::Base, d, |x, s, sc, out| {
                f.gradient(x, &mut sc.grad);
                let w = (r2 - s) / big_m;
                sc.grad.iter_mut().for_each(|g| *g *= w);
                cov.mul_vec(&sc.grad, out);
            })?;
            (EstimatorKind::SteinRhsReweighted, stats)
        }
    };
    Ok(GradEstimate::from_stats(kind, d, ValueShape::Vector, stats, batch.seed()))
}

fn bonnet(law: &QGaussian, f: &dyn TestFunction, draws: Draws<'_>, exec: &impl Executor, kind: EstimatorKind) -> Result<GradEstimate> {
    check_fn(law, f)?;
    let d = law.dim();
    let stats = draws.run(exec, law, Source::Base, d, |x, _, _, out| f.gradient(x, out))?;
    Ok(GradEstimate::from_stats(kind, d, ValueShape::Vector, stats, draws.seed()))
}

fn price(law: &QGaussian, f: &dyn TestFunction, draws: Draws<'_>, exec: &impl Executor, kind: EstimatorKind) -> Result<GradEstimate> {
    check_fn(law, f)?;
    require_hessian(f)?;
    let d = law.dim();
    let factor = 0.5 * law.moments().cov_scale;
    let stats = draws.run(exec, law, Source::Escort, d * d, |x, _, _, out| {
        f.hessian(x, out);
        out.iter_mut().for_each(|h| *h *= factor);
    })?;
    Ok(GradEstimate::from_stats(kind, d, ValueShape::Matrix, stats, draws.seed()))
}

/// Location gradient ∇_μ E_p[f] = E_p[∇f] from `count` fresh base draws.
pub fn grad_mu<E: Executor>(law: &QGaussian, f: &dyn TestFunction, count: usize, seed: u64, exec: &E) -> Result<GradEstimate> {
    bonnet(law, f, Draws::Stream { count, seed }, exec, EstimatorKind::QBonnet)
}

pub fn grad_mu_on<E: Executor>(law: &QGaussian, f: &dyn TestFunction, batch: &SampleBatch, exec: &E) -> Result<GradEstimate> {
    bonnet(law, f, Draws::Batch(batch), exec, EstimatorKind::QBonnet)
}

/// Scale gradient ∇_Σ E_p[f] = (E_p[s]/D)·½·E_{p★}[∇²f] from `count` fresh escort draws.
pub fn grad_sigma<E: Executor>(law: &QGaussian, f: &dyn TestFunction, count: usize, seed: u64, exec: &E) -> Result<GradEstimate> {
    price(law, f, Draws::Stream { count, seed }, exec, EstimatorKind::QPrice)
}

pub fn grad_sigma_on<E: Executor>(law: &QGaussian, f: &dyn TestFunction, batch: &SampleBatch, exec: &E) -> Result<GradEstimate> {
    price(law, f, Draws::Batch(batch), exec, EstimatorKind::QPrice)
}

fn reweighted(
    law: &QGaussian,
    f: &dyn TestFunction,
    which: Reweighted,
    draws: Draws<'_>,
    exec: &impl Executor,
    c3: f64,
) -> Result<GradEstimate> {
    check_fn(law, f)?;
    let (r2, big_m) = support_constants(law, "the reweighted estimator")?;
    let d = law.dim();
    let (kind, shape, width) = match which {
        Reweighted::Gradient => (EstimatorKind::ReweightedGradient, ValueShape::Vector, d),
        Reweighted::Hessian => {
            require_hessian(f)?;
            (EstimatorKind::ReweightedHessian, ValueShape::Matrix, d * d)
        }
    };
    let stats = draws.run(exec, law, Source::Base, width, |x, s, _, out| {
        match which {
            Reweighted::Gradient => f.gradient(x, out),
            Reweighted::Hessian => f.hessian(x, out),
        }
        let w = (r2 - s) / big_m;
        out.iter_mut().for_each(|v| *v *= w);
    })?;
    let mut est = GradEstimate::from_stats(kind, d, shape, stats, draws.seed());
    let constant = match which {
        Reweighted::Gradient => f.gradient_bound(),
        Reweighted::Hessian => f.hessian_bound(),
    };
    est.bound = constant.filter(|c| c.is_finite()).map(|c| {
        let per_entry = variance_bound(est.samples, r2, big_m, c);
        match which {
            Reweighted::Gradient => VarianceBound { per_entry, frobenius: None, op_norm: None },
            Reweighted::Hessian => VarianceBound {
                per_entry,
                frobenius: Some((d * d) as f64 * per_entry),
                op_norm: Some(op_norm_diagnostic(est.samples, d, r2, big_m, c, c3)),
            },
        }
    });
    Ok(est)
}

/// (1/S)(R²C/M)²
pub fn variance_bound(samples: usize, radius_sq: f64, big_m: f64, c: f64) -> f64 {
    let k = radius_sq * c / big_m;
    k * k / samples as f64
}

/// `C₃·R²C₂/M·√(log D / S)` with a caller-supplied, uncertified `C₃`.
pub fn op_norm_diagnostic(samples: usize, dim: usize, radius_sq: f64, big_m: f64, c2: f64, c3: f64) -> OpNormDiagnostic {
    let value = c3 * radius_sq * c2 / big_m * libm::sqrt(libm::log(dim as f64) / samples as f64);
    OpNormDiagnostic { c3, value }
}

/// Reweighted estimators ĝ (from `∇t`) or Ĥ (from `∇²f`) over `count` base draws.
/// The variance bound is attached when the function reports a finite constant.
pub fn prop_estimator<E: Executor>(
    law: &QGaussian,
    f: &dyn TestFunction,
    which: Reweighted,
    count: usize,
    seed: u64,
    exec: &E,
) -> Result<GradEstimate> {
    reweighted(law, f, which, Draws::Stream { count, seed }, exec, DEFAULT_C3)
}

pub fn prop_estimator_on<E: Executor>(
    law: &QGaussian,
    f: &dyn TestFunction,
    which: Reweighted,
    batch: &SampleBatch,
    c3: f64,
    exec: &E,
) -> Result<GradEstimate> {
    reweighted(law, f, which, Draws::Batch(batch), exec, c3)
}

/// Classical Bonnet (E[∇f]) and Price (½E[∇²f]) estimators under N(μ, Σ).
pub fn gaussian_baseline<E: Executor>(
    mu: &[f64],
    factor: &LowerTriangular,
    f: &dyn TestFunction,
    count: usize,
    seed: u64,
    which: Baseline,
    exec: &E,
) -> Result<GradEstimate> {
    let law = QGaussian::new(mu.to_vec(), factor.clone(), 1.0)?;
    let draws = Draws::Stream { count, seed };
    match which {
        Baseline::Location => bonnet(&law, f, draws, exec, EstimatorKind::GaussianBonnet),
        Baseline::Scale => price(&law, f, draws, exec, EstimatorKind::GaussianPrice),
    }
}

/// Running statistics of the escort weights (R² − s)/M over a base batch;
/// their mean is 1 in expectation.
pub fn escort_weights(law: &QGaussian, batch: &SampleBatch) -> Result<RunningStats> {
    let (r2, big_m) = support_constants(law, "escort weights")?;
    check_batch(law, batch, Source::Base)?;
    let mut stats = RunningStats::new(1);
    for &s in batch.s_values() {
        stats.push(&[(r2 - s) / big_m]);
    }
    Ok(stats)
}
