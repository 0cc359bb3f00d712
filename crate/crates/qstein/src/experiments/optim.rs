//! SGD, SAM, VSGD and q-VSGD step rules with shared momentum and weight decay.

use qstein_core::rng::{chunk_rng, derive_seed};
use qstein_core::sampler::{PointSampler, Source};
use qstein_core::QGaussian;
use serde::{Deserialize, Serialize};

use super::ConfigError;

const TAG_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Sgd,
    Sam,
    Vsgd,
    Qvsgd,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Sgd => "sgd",
            Rule::Sam => "sam",
            Rule::Vsgd => "vsgd",
            Rule::Qvsgd => "qvsgd",
        }
    }
}

fn default_rho() -> f64 {
    0.05
}
fn default_q() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_epochs() -> usize {
    60
}
fn default_batch() -> usize {
    32
}
fn default_mc() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub rule: Rule,
    /// Perturbation radius.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Entropic index of the q-VSGD perturbation.
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Perturbation draws averaged per step (vsgd, qvsgd).
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Scale VSGD noise by `rho`; unscaled VSGD uses δ ~ N(0, I).
    #[serde(default)]
    pub vsgd_scaled: bool,
    /// Display name; defaults to a name built from the rule and its parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl OptimizerConfig {
    pub fn new(rule: Rule) -> Self {
        OptimizerConfig {
            rule,
            rho: default_rho(),
            q: default_q(),
            lr: default_lr(),
            momentum: default_momentum(),
            weight_decay: 0.0,
            epochs: default_epochs(),
            batch_size: default_batch(),
            mc_samples: default_mc(),
            seed: 0,
            vsgd_scaled: false,
            label: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.rho) {
            return Err(ConfigError::new("rho must be finite and ≥ 0"));
        }
        if !(self.q.is_finite() && self.q <= 1.0) {
            return Err(ConfigError::new(format!(
                "q = {} is unsupported: only q ≤ 1 (bounded support or the Gaussian limit) is implemented",
                self.q
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !finite_nonneg(self.momentum) || !finite_nonneg(self.weight_decay) {
            return Err(ConfigError::new("lr must be > 0; momentum and weight_decay ≥ 0"));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(ConfigError::new("batch_size and mc_samples must be ≥ 1"));
        }
        Ok(())
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.rule {
            Rule::Sgd => "sgd".into(),
            Rule::Sam => format!("sam(rho={})", self.rho),
            Rule::Vsgd if self.vsgd_scaled => format!("vsgd(rho={})", self.rho),
            Rule::Vsgd => "vsgd".into(),
            Rule::Qvsgd => format!("qvsgd(q={},rho={})", self.q, self.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub grad_evals: usize,
    /// ‖δ‖₂ of every perturbation used in the step.
    pub perturbation_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    NonFiniteParams,
}

impl std::fmt::Display for StepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepError::NonFiniteParams => f.write_str("parameters are not finite"),
        }
    }
}

impl std::error::Error for StepError {}

/// Stateful optimizer for a fixed parameter dimension.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    /// Perturbation law for vsgd (q = 1) and qvsgd.
    law: Option<QGaussian>,
    /// Divisor applied to perturbation draws: R(q, D), or 1 in the Gaussian limit.
    radius: f64,
    velocity: Vec<f64>,
    step: u64,
    grad: Vec<f64>,
    probe: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<f64>,
    acc: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, dim: usize) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let law = match cfg.rule {
            Rule::Vsgd => Some(QGaussian::standard(dim, 1.0)),
            Rule::Qvsgd => Some(QGaussian::standard(dim, cfg.q)),
            Rule::Sgd | Rule::Sam => None,
        }
        .transpose()
        .map_err(|e| ConfigError::new(e.to_string()))?;
        let radius = match &law {
            Some(p) if !p.is_gaussian() => p.radius_sq().sqrt(),
            _ => 1.0,
        };
        Ok(Optimizer {
            cfg,
            law,
            radius,
            velocity: vec![0.0; dim],
            step: 0,
            grad: vec![0.0; dim],
            probe: vec![0.0; dim],
            delta: vec![0.0; dim],
            scratch: vec![0.0; dim],
            acc: vec![0.0; dim],
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Multiplier turning a perturbation draw into δ.
    fn noise_scale(&self) -> f64 {
        match self.cfg.rule {
            Rule::Vsgd if !self.cfg.vsgd_scaled => 1.0,
            _ => self.cfg.rho / self.radius,
        }
    }

    /// One update of `params` given a minibatch gradient oracle `grad(w, out)`.
    ///
    /// The search direction `g` is ∇f(w) (sgd), ∇f(w + ρ∇f/‖∇f‖) (sam) or the
    /// mean of ∇f(w + δₖ) over `mc_samples` random perturbations (vsgd,
    /// qvsgd). All rules then apply `v ← μv + g + λw`, `w ← w − ηv`.
    pub fn step<G>(&mut self, params: &mut [f64], mut grad: G) -> Result<StepInfo, StepError>
    where
        G: FnMut(&[f64], &mut [f64]),
    {
        if params.iter().any(|w| !w.is_finite()) {
            return Err(StepError::NonFiniteParams);
        }
        let mut norms = Vec::new();
        let mut evals = 0;
        match self.cfg.rule {
            Rule::Sgd => {
                grad(params, &mut self.grad);
                evals += 1;
            }
            Rule::Sam => {
                grad(params, &mut self.grad);
                let norm = self.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let c = self.cfg.rho / norm;
                    for (d, g) in self.delta.iter_mut().zip(&self.grad) {
                        *d = c * g;
                    }
                } else {
                    self.delta.fill(0.0);
                }
                norms.push(self.delta.iter().map(|d| d * d).sum::<f64>().sqrt());
                for ((p, w), d) in self.probe.iter_mut().zip(params.iter()).zip(&self.delta) {
                    *p = w + d;
                }
                grad(&self.probe, &mut self.grad);
                evals += 2;
            }
            Rule::Vsgd | Rule::Qvsgd => {
                let law = self.law.as_ref().expect("perturbation law");
                let sampler = PointSampler::new(law, Source::Base);
                let scale = self.noise_scale();
                let mut rng = chunk_rng(derive_seed(self.cfg.seed, &[TAG_NOISE, self.step]), 0);
                self.acc.fill(0.0);
                for _ in 0..self.cfg.mc_samples {
                    sampler.draw(&mut rng, &mut self.scratch, &mut self.delta);
                    self.delta.iter_mut().for_each(|d| *d *= scale);
                    norms.push(self.delta.iter().map(|d| d * d).sum::<f64>().sqrt());
                    for ((p, w), d) in self.probe.iter_mut().zip(params.iter()).zip(&self.delta) {
                        *p = w + d;
                    }
                    grad(&self.probe, &mut self.grad);
                    evals += 1;
                    for (a, g) in self.acc.iter_mut().zip(&self.grad) {
                        *a += g;
                    }
                }
                let inv = 1.0 / self.cfg.mc_samples as f64;
                for (g, a) in self.grad.iter_mut().zip(&self.acc) {
                    *g = a * inv;
                }
            }
        }
        let (lr, mom, wd) = (self.cfg.lr, self.cfg.momentum, self.cfg.weight_decay);
        for ((w, v), g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(&self.grad) {
            *v = mom * *v + g + wd * *w;
            *w -= lr * *v;
        }
        self.step += 1;
        Ok(StepInfo { grad_evals: evals, perturbation_norms: norms })
    }
}
