//! Exact sampling from q-Gaussians and their escort laws.
//!
//! A draw follows the radial decomposition
//!
//! ```text
//! u ~ Unif(S^{D−1}),   r²/R² ~ Beta(D/2, m + 1)   (escort: m + 2),   z = r·u,   x = μ + L·z
//! ```
//!
//! The direction and the first Gamma variate of the Beta ratio share one
//! standard-normal vector `g`: `u = g/|g|` and `G₁ = |g|²/2 ~ Gamma(D/2)` are
//! independent, so `r²/R² = G₁/(G₁ + G₂)` with `G₂ ~ Gamma(m + 1)` (or
//! `m + 2`) drawn by Marsaglia–Tsang. The Gaussian limit uses `x = μ + L·g`,
//! which consumes the same normal vector. Consequently batches drawn with the
//! same seed from laws of equal dimension are coupled (common random numbers).

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::qgauss::{QGaussian, Regime};
use crate::rng::{chunk_count, chunk_rng, open01, standard_normal, CHUNK_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Source {
    /// The q-Gaussian p itself.
    Base,
    /// The escort p★ (first associated law).
    Escort,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Base => "base",
            Source::Escort => "escort",
        }
    }
}

/// Note attached when an escort batch is requested from the Gaussian limit.
pub const GAUSSIAN_ESCORT_NOTE: &str = "escort equals base in the Gaussian limit; base draws returned";

/// Draws with their cached squared radii.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    points: Vec<f64>,
    s_values: Vec<f64>,
    seed: u64,
    source: Source,
    note: Option<&'static str>,
}

impl SampleBatch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.s_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_values.is_empty()
    }

    /// Row-major `len × dim` matrix of draws.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn note(&self) -> Option<&'static str> {
        self.note
    }
}

/// Gamma(shape, 1) variate, Marsaglia–Tsang; shapes below one use the
/// `G(a + 1)·U^{1/a}` boost.
pub fn gamma_variate<R: RngCore>(shape: f64, rng: &mut R) -> f64 {
    libm::exp(log_gamma_variate(shape, rng))
}

/// Logarithm of a Gamma(shape, 1) variate. Keeps the boost step in log space
/// so very small shapes do not underflow.
pub fn log_gamma_variate<R: RngCore>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let g = marsaglia_tsang(shape + 1.0, rng);
        let u = open01(rng);
        return libm::log(g) + libm::log(u) / shape;
    }
    libm::log(marsaglia_tsang(shape, rng))
}

fn marsaglia_tsang<R: RngCore>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
            return d * v;
        }
    }
}

/// Beta(alpha, beta) variate as G₁/(G₁ + G₂); always strictly inside (0, 1).
pub fn beta_variate<R: RngCore>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let l1 = log_gamma_variate(alpha, rng);
    let l2 = log_gamma_variate(beta, rng);
    let b = 1.0 / (1.0 + libm::exp(l2 - l1));
    b.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sample_beta<R: RngCore>(alpha: f64, beta: f64, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidShape { alpha, beta });
    }
    Ok((0..count).map(|_| beta_variate(alpha, beta, rng)).collect())
}

/// `count` points uniform on the unit sphere in R^dim, row-major.
pub fn sample_sphere<R: RngCore>(dim: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dim * count];
    for row in out.chunks_exact_mut(dim.max(1)).take(count) {
        loop {
            let mut n2 = 0.0;
            for v in row.iter_mut() {
                *v = standard_normal(rng);
                n2 += *v * *v;
            }
            if n2 > 0.0 {
                let norm = libm::sqrt(n2);
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    out
}

/// Per-draw generator for a fixed law and source.
#[derive(Debug, Clone, Copy)]
pub struct PointSampler<'a> {
    law: &'a QGaussian,
    source: Source,
    /// Shape of the second Gamma variate (m + 1 or m + 2); `None` for the Gaussian path.
    second_shape: Option<f64>,
    radius_sq: f64,
}

impl<'a> PointSampler<'a> {
    /// Escort requests on the Gaussian limit fall back to base draws.
    pub fn new(law: &'a QGaussian, source: Source) -> Self {
        match law.regime() {
            Regime::Gaussian => PointSampler {
                law,
                source: Source::Base,
                second_shape: None,
                radius_sq: f64::INFINITY,
            },
            Regime::Bounded { m, radius_sq } => PointSampler {
                law,
                source,
                second_shape: Some(match source {
                    Source::Base => m + 1.0,
                    Source::Escort => m + 2.0,
                }),
                radius_sq,
            },
        }
    }

    pub fn law(&self) -> &'a QGaussian {
        self.law
    }

    /// Source actually sampled.
    pub fn source(&self) -> Source {
        self.source
    }

    /// Draws one point into `x` (length D), using `scratch` (length D), and
    /// returns its squared radius s(x).
    pub fn draw<R: RngCore>(&self, rng: &mut R, scratch: &mut [f64], x: &mut [f64]) -> f64 {
        let mut n2 = 0.0;
        for v in scratch.iter_mut() {
            *v = standard_normal(rng);
            n2 += *v * *v;
        }
        let s = match self.second_shape {
            None => n2,
            Some(shape) => {
                let g1 = 0.5 * n2;
                let g2 = gamma_variate(shape, rng);
                let mut b = g1 / (g1 + g2);
                if b >= 1.0 {
                    b = 1.0 - f64::EPSILON / 2.0;
                }
                let s = self.radius_sq * b;
                let scale = if n2 > 0.0 { libm::sqrt(s / n2) } else { 0.0 };
                scratch.iter_mut().for_each(|v| *v *= scale);
                s
            }
        };
        self.law.factor().mul_vec(scratch, x);
        for (xi, mi) in x.iter_mut().zip(self.law.mu()) {
            *xi += mi;
        }
        s
    }

    /// Runs `visit(x, s)` over draws `[chunk·CHUNK_LEN, min((chunk+1)·CHUNK_LEN, count))`.
    pub fn visit_chunk<F: FnMut(&[f64], f64)>(&self, seed: u64, chunk: usize, count: usize, mut visit: F) {
        let start = chunk * CHUNK_LEN;
        let end = (start + CHUNK_LEN).min(count);
        let d = self.law.dim();
        let mut rng = chunk_rng(seed, chunk as u64);
        let mut scratch = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in start..end {
            let s = self.draw(&mut rng, &mut scratch, &mut x);
            visit(&x, s);
        }
    }
}

/// Draws `count` points from `law` (or its escort) with the given seed.
///
/// Identical `(law, count, seed, source)` give bit-identical batches for any executor.
pub fn sample<E: Executor>(
    law: &QGaussian,
    count: usize,
    seed: u64,
    source: Source,
    exec: &E,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::EmptySample);
    }
    let sampler = PointSampler::new(law, source);
    let d = law.dim();
    let parts = exec.map_indexed(chunk_count(count), |c| {
        let mut pts = Vec::with_capacity(CHUNK_LEN * d);
        let mut ss = Vec::with_capacity(CHUNK_LEN);
        sampler.visit_chunk(seed, c, count, |x, s| {
            pts.extend_from_slice(x);
            ss.push(s);
        });
        (pts, ss)
    });
    let mut points = Vec::with_capacity(count * d);
    let mut s_values = Vec::with_capacity(count);
    for (p, s) in parts {
        points.extend_from_slice(&p);
        s_values.extend_from_slice(&s);
    }
    let note = if law.is_gaussian() && source == Source::Escort {
        Some(GAUSSIAN_ESCORT_NOTE)
    } else {
        None
    };
    Ok(SampleBatch { dim: d, points, s_values, seed, source: sampler.source(), note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::linalg::LowerTriangular;
    use crate::rng::chunk_rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn sphere_rows_are_unit() {
        let mut rng = chunk_rng(11, 0);
        for d in [1usize, 2, 3, 17] {
            let pts = sample_sphere(d, 1000, &mut rng);
            for row in pts.chunks_exact(d) {
                let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sphere_is_balanced() {
        let mut rng = chunk_rng(12, 0);
        let n = 100_000;
        let pts = sample_sphere(1, n, &mut rng);
        assert!(pts.iter().all(|v| *v == 1.0 || *v == -1.0));
        let plus = pts.iter().filter(|v| **v > 0.0).count() as f64;
        let expected = n as f64 / 2.0;
        let chi2 = 2.0 * (plus - expected).powi(2) / expected;
        // χ²₁ critical value at 0.01
        assert!(chi2 < 6.635, "chi2 = {chi2}");
    }

    #[test]
    fn beta_moments() {
        let mut rng = chunk_rng(13, 0);
        let xs = sample_beta(1.0, 1.0, 100_000, &mut rng).unwrap();
        let (m, _) = mean_var(&xs);
        assert!((m - 0.5).abs() < 0.005);

        for &(a, b) in &[(0.5, 2.0), (0.5, 3.0), (2.5, 1.5), (0.1, 0.2), (40.0, 7.0)] {
            let n = 1_000_000;
            let xs = sample_beta(a, b, n, &mut rng).unwrap();
            assert!(xs.iter().all(|x| *x > 0.0 && *x < 1.0));
            let (m, v) = mean_var(&xs);
            let mean = a / (a + b);
            let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
            // Var of the sample variance uses the fourth central moment; bound it by E[(X−μ)⁴] ≤ var (X in [0,1]).
            assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt(), "a={a} b={b} mean {m} vs {mean}");
            assert!((v - var).abs() < 4.0 * (var / n as f64).sqrt(), "a={a} b={b} var {v} vs {var}");
        }
        assert!(matches!(sample_beta(0.0, 1.0, 1, &mut rng), Err(Error::InvalidShape { .. })));
        assert!(matches!(sample_beta(1.0, -2.0, 1, &mut rng), Err(Error::InvalidShape { .. })));
    }

    #[test]
    fn escort_radial_mean_from_beta() {
        let p = QGaussian::standard(3, 0.5).unwrap();
        let m = p.m().unwrap();
        let r2 = p.radius_sq();
        let mut rng = chunk_rng(14, 0);
        let n = 1_000_000;
        let s: Vec<f64> = sample_beta(1.5, m + 2.0, n, &mut rng).unwrap().into_iter().map(|b| r2 * b).collect();
        let (mean, var) = mean_var(&s);
        let expected = 3.0 * r2 / (3.0 + 2.0 * (m + 2.0));
        assert!((mean - expected).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn support_and_cache() {
        let factor = LowerTriangular::from_rows(&[vec![1.1], vec![0.4, 0.5]]).unwrap();
        for &q in &[-1.0, 0.0, 0.5, 0.99] {
            let p = QGaussian::new(vec![0.3, -0.7], factor.clone(), q).unwrap();
            for source in [Source::Base, Source::Escort] {
                let b = sample(&p, 20_000, 9, source, &Sequential).unwrap();
                assert_eq!(b.len(), 20_000);
                for (k, row) in b.rows().enumerate() {
                    let s = b.s_values()[k];
                    assert!(s < p.radius_sq());
                    let again = p.quad_form(row);
                    assert!((again - s).abs() <= 1e-10 * s.max(1e-300), "{again} vs {s}");
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = QGaussian::standard(2, 0.3).unwrap();
        let a = sample(&p, 10_000, 42, Source::Base, &Sequential).unwrap();
        let b = sample(&p, 10_000, 42, Source::Base, &Sequential).unwrap();
        let c = sample(&p, 10_000, 43, Source::Base, &Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points(), c.points());
        // prefixes agree: draw k depends only on (seed, k)
        let short = sample(&p, 5_000, 42, Source::Base, &Sequential).unwrap();
        assert_eq!(short.points(), &a.points()[..10_000]);
    }

    #[test]
    fn mean_s_within_three_sigma() {
        let p = QGaussian::standard(1, 0.0).unwrap();
        let b = sample(&p, 1_000_000, 2024, Source::Base, &Sequential).unwrap();
        let (m, v) = mean_var(b.s_values());
        let expected = p.radius_sq() / 5.0;
        assert!((m - expected).abs() < 3.0 * (v / 1e6).sqrt(), "{m} vs {expected}");
    }

    #[test]
    fn gaussian_escort_falls_back() {
        let p = QGaussian::standard(2, 1.0).unwrap();
        let b = sample(&p, 10, 1, Source::Escort, &Sequential).unwrap();
        assert_eq!(b.source(), Source::Base);
        assert_eq!(b.note(), Some(GAUSSIAN_ESCORT_NOTE));
        let base = sample(&p, 10, 1, Source::Base, &Sequential).unwrap();
        assert_eq!(b.points(), base.points());
    }

    #[test]
    fn empty_sample_rejected() {
        let p = QGaussian::standard(2, 0.3).unwrap();
        assert_eq!(sample(&p, 0, 1, Source::Base, &Sequential).unwrap_err(), Error::EmptySample);
    }
}
