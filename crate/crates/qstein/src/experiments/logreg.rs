//! Variance of smoothed logistic-regression gradients under q-Gaussian and
//! Gaussian weight perturbations.

use qstein_core::exec::Executor;
use qstein_core::rng::{chunk_rng, derive_seed, open01, standard_normal};
use qstein_core::sampler::{PointSampler, Source};
use qstein_core::stats::RunningStats;
use qstein_core::QGaussian;
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::io::real;

const TAG_DATA: u64 = 1;
const TAG_NOISE: u64 = 2;

fn default_dims() -> Vec<usize> {
    vec![10, 50, 200]
}
fn default_qs() -> Vec<f64> {
    vec![0.0, 0.5, 0.8, 1.0]
}
fn default_n() -> usize {
    2000
}
fn default_s() -> usize {
    8
}
fn default_reps() -> usize {
    50
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRegConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_qs")]
    pub qs: Vec<f64>,
    /// Dataset size.
    #[serde(default = "default_n", rename = "N")]
    pub n: usize,
    /// Monte Carlo samples per gradient estimate.
    #[serde(default = "default_s", rename = "S")]
    pub s: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Multiplies every perturbation; 0 makes the estimate deterministic.
    #[serde(default = "default_scale")]
    pub perturbation_scale: f64,
    /// Divide q-Gaussian perturbations by R(q, D) as q-VSGD does.
    #[serde(default)]
    pub normalize_by_radius: bool,
    /// Optional second sample size run on the same grid (1/S scaling check).
    #[serde(default)]
    pub reference_s: Option<usize>,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            dims: default_dims(),
            qs: default_qs(),
            n: default_n(),
            s: default_s(),
            reps: default_reps(),
            seed: 0,
            perturbation_scale: default_scale(),
            normalize_by_radius: false,
            reference_s: None,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(ConfigError::new("logreg.dims must be a nonempty list of positive integers"));
        }
        if self.qs.is_empty() || self.qs.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(ConfigError::new("logreg.qs must be a nonempty list of reals in [0, 1]"));
        }
        if self.n == 0 || self.s == 0 || self.reps == 0 || self.reference_s == Some(0) {
            return Err(ConfigError::new("logreg.N, logreg.S, logreg.reps and logreg.reference_s must be at least 1"));
        }
        if !(self.perturbation_scale >= 0.0 && self.perturbation_scale.is_finite()) {
            return Err(ConfigError::new("logreg.perturbation_scale must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Synthetic logistic-regression problem with mean loss
/// `F(w) = (1/N)Σ log(1 + exp(−ỹᵢ xᵢ·w))`, `ỹ ∈ {−1, +1}`.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    pub w_star: Vec<f64>,
}

impl LogisticData {
    /// `xᵢ ~ N(0, I)`, `w★ ~ N(0, I)`, `yᵢ ~ Bernoulli(σ(xᵢ·w★))`.
    pub fn generate(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = chunk_rng(seed, 0);
        let w_star: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let features: Vec<f64> = (0..n * dim).map(|_| standard_normal(&mut rng)).collect();
        let labels = features
            .chunks_exact(dim)
            .map(|x| {
                let p = sigmoid(dot(x, &w_star));
                if open01(&mut rng) < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        LogisticData { dim, features, labels, w_star }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// ∇F(w) = (1/N)Σ (σ(xᵢ·w) − yᵢ) xᵢ
    pub fn gradient(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (x, y) in self.features.chunks_exact(self.dim).zip(&self.labels) {
            let r = sigmoid(dot(x, w)) - y;
            for (o, xi) in out.iter_mut().zip(x) {
                *o += r * xi;
            }
        }
        let inv = 1.0 / self.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceArm {
    #[serde(rename = "D")]
    pub d: usize,
    pub q: f64,
    #[serde(rename = "S")]
    pub s: usize,
    /// (1/D)Σⱼ Var(∇̂Fⱼ) across repetitions.
    #[serde(with = "real")]
    pub mean_variance: f64,
    #[serde(with = "real")]
    pub std_error: f64,
    /// Support radius R(q, D); infinite for q = 1.
    #[serde(with = "real")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    #[serde(rename = "D")]
    pub d: usize,
    /// Variance is nonincreasing as q goes from its largest to its smallest value.
    pub nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegResult {
    pub arms: Vec<VarianceArm>,
    pub reference_arms: Vec<VarianceArm>,
    pub ordering: Vec<OrderingCheck>,
}

/// Gradient estimates `(1/S)Σ ∇F(w★ + εₖ)` for each repetition.
///
/// Draw `k` of repetition `r` uses its own stream keyed by `(seed, D, r, k)`,
/// and the radial construction consumes the Gaussian direction first, so all
/// q arms share the same directions.
fn estimates<E: Executor>(
    data: &LogisticData,
    law: &QGaussian,
    cfg: &LogRegConfig,
    s: usize,
    exec: &E,
) -> Vec<Vec<f64>> {
    let d = data.dim;
    let sampler = PointSampler::new(law, Source::Base);
    let scale = if cfg.normalize_by_radius && !law.is_gaussian() {
        cfg.perturbation_scale / law.radius_sq().sqrt()
    } else {
        cfg.perturbation_scale
    };
    exec.map_indexed(cfg.reps, |r| {
        let mut acc = vec![0.0; d];
        let mut eps = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut w = vec![0.0; d];
        let mut g = vec![0.0; d];
        for k in 0..s {
            let mut rng = chunk_rng(derive_seed(cfg.seed, &[TAG_NOISE, d as u64, r as u64, k as u64]), 0);
            sampler.draw(&mut rng, &mut scratch, &mut eps);
            for i in 0..d {
                w[i] = data.w_star[i] + scale * eps[i];
            }
            data.gradient(&w, &mut g);
            for (a, gi) in acc.iter_mut().zip(&g) {
                *a += gi;
            }
        }
        acc.iter_mut().for_each(|a| *a /= s as f64);
        acc
    })
}

/// Mean per-coordinate variance across repetitions and its standard error.
///
/// The standard error treats `aᵣ = (1/D)Σⱼ (ĝᵣⱼ − ḡⱼ)²·R/(R − 1)` as
/// repetition-level observations whose mean is the reported variance.
pub fn variance_summary(reps: &[Vec<f64>]) -> (f64, f64) {
    let r = reps.len();
    if r < 2 {
        return (f64::NAN, f64::NAN);
    }
    let d = reps[0].len();
    let mut stats = RunningStats::new(d);
    reps.iter().for_each(|g| stats.push(g));
    let mean = stats.mean();
    let bessel = r as f64 / (r as f64 - 1.0);
    let a: Vec<f64> = reps
        .iter()
        .map(|g| g.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>() / d as f64 * bessel)
        .collect();
    let avg = a.iter().sum::<f64>() / r as f64;
    let var_a = a.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / (r as f64 - 1.0);
    (avg, (var_a / r as f64).sqrt())
}

pub fn run_logreg_variance<E: Executor>(cfg: &LogRegConfig, exec: &E) -> Result<LogRegResult, ConfigError> {
    cfg.validate()?;
    let mut arms = Vec::new();
    let mut reference_arms = Vec::new();
    let mut ordering = Vec::new();
    for &d in &cfg.dims {
        let data = LogisticData::generate(d, cfg.n, derive_seed(cfg.seed, &[TAG_DATA, d as u64]));
        let mut row = Vec::new();
        for &q in &cfg.qs {
            let law = QGaussian::standard(d, q).map_err(|e| ConfigError::new(e.to_string()))?;
            let radius = law.radius_sq().sqrt();
            let arm = |s: usize| {
                let (mean_variance, std_error) = variance_summary(&estimates(&data, &law, cfg, s, exec));
                VarianceArm { d, q, s, mean_variance, std_error, radius }
            };
            let a = arm(cfg.s);
            row.push((q, a.mean_variance));
            arms.push(a);
            if let Some(s) = cfg.reference_s {
                reference_arms.push(arm(s));
            }
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nonincreasing = row.windows(2).all(|w| w[0].1 <= w[1].1);
        ordering.push(OrderingCheck { d, nonincreasing });
    }
    Ok(LogRegResult { arms, reference_arms, ordering })
}

#[cfg(test)]
mod tests {
    use super::*;
    use qstein_core::exec::Sequential;

    fn small() -> LogRegConfig {
        LogRegConfig { dims: vec![5], qs: vec![0.0, 1.0], n: 200, s: 4, reps: 20, seed: 3, ..Default::default() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = LogisticData::generate(3, 50, 1);
        let w = [0.3, -0.2, 0.5];
        let loss = |w: &[f64]| {
            data.features
                .chunks_exact(3)
                .zip(&data.labels)
                .map(|(x, y)| {
                    let t = dot(x, w);
                    (1.0 + t.exp()).ln() - y * t
                })
                .sum::<f64>()
                / 50.0
        };
        let mut g = [0.0; 3];
        data.gradient(&w, &mut g);
        for i in 0..3 {
            let mut a = w;
            let mut b = w;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            assert!(((loss(&a) - loss(&b)) / 2e-6 - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_scale_gives_zero_variance() {
        let cfg = LogRegConfig { perturbation_scale: 0.0, ..small() };
        let res = run_logreg_variance(&cfg, &Sequential).unwrap();
        assert!(res.arms.iter().all(|a| a.mean_variance == 0.0 && a.std_error == 0.0));
    }

    #[test]
    fn bounded_arm_has_lower_variance() {
        let res = run_logreg_variance(&small(), &Sequential).unwrap();
        assert!(res.arms[0].mean_variance < res.arms[1].mean_variance);
        assert!(res.ordering[0].nonincreasing);
        assert!(res.arms.iter().all(|a| a.std_error >= 0.0));
        assert!(res.arms[1].radius.is_infinite());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(LogRegConfig { qs: vec![1.5], ..small() }.validate().is_err());
        assert!(LogRegConfig { dims: vec![], ..small() }.validate().is_err());
        assert!(LogRegConfig { s: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn summary_of_known_values() {
        let reps = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let (v, se) = variance_summary(&reps);
        assert_eq!(v, 1.0);
        assert_eq!(se, 0.0);
        assert!(variance_summary(&reps[..1]).0.is_nan());
    }
}
