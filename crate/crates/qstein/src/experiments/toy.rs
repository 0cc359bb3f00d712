//! Small-model training runs comparing the optimizer step rules.

use std::time::Instant;

use qstein_core::exec::Executor;
use qstein_core::rng::{chunk_rng, derive_seed, open01, standard_normal};
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerConfig, Rule};
use super::ConfigError;
use crate::io::real;

const TAG_DATA: u64 = 10;
const TAG_INIT: u64 = 11;
const TAG_ORDER: u64 = 12;
const TAG_NOISE: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    /// Two interleaved half circles in the plane.
    TwoMoons,
    /// Three Gaussian blobs in the plane.
    #[serde(alias = "small_mlp_classification")]
    Blobs,
}

impl Dataset {
    pub fn classes(self) -> usize {
        match self {
            Dataset::TwoMoons => 2,
            Dataset::Blobs => 3,
        }
    }

    /// `n` labelled points in R²; classes alternate so every prefix is balanced.
    pub fn generate(self, n: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = chunk_rng(seed, 0);
        let mut x = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        let c = self.classes();
        for i in 0..n {
            let label = i % c;
            let (a, b) = match self {
                Dataset::TwoMoons => {
                    let t = std::f64::consts::PI * open01(&mut rng);
                    if label == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    }
                }
                Dataset::Blobs => {
                    let phi = 2.0 * std::f64::consts::PI * label as f64 / 3.0;
                    (2.0 * phi.cos(), 2.0 * phi.sin())
                }
            };
            let spread = match self {
                Dataset::TwoMoons => noise,
                Dataset::Blobs => 5.0 * noise,
            };
            x.push(a + spread * standard_normal(&mut rng));
            x.push(b + spread * standard_normal(&mut rng));
            y.push(label);
        }
        (x, y)
    }
}

/// One-hidden-layer tanh perceptron with softmax output on 2-D inputs.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub hidden: usize,
    pub classes: usize,
}

impl Mlp {
    const INPUT: usize = 2;

    pub fn param_count(&self) -> usize {
        self.hidden * Self::INPUT + self.hidden + self.classes * self.hidden + self.classes
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = chunk_rng(seed, 0);
        let mut w = vec![0.0; self.param_count()];
        let (h, c) = (self.hidden, self.classes);
        let s1 = (1.0 / Self::INPUT as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        for v in &mut w[..h * Self::INPUT] {
            *v = s1 * standard_normal(&mut rng);
        }
        let off = h * Self::INPUT + h;
        for v in &mut w[off..off + c * h] {
            *v = s2 * standard_normal(&mut rng);
        }
        w
    }

    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (h, c) = (self.hidden, self.classes);
        let (w1, rest) = w.split_at(h * Self::INPUT);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        debug_assert_eq!(b2.len(), c);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and class logits for one input.
    fn forward(&self, w: &[f64], x: &[f64], hid: &mut [f64], logits: &mut [f64]) {
        let (w1, b1, w2, b2) = self.split(w);
        for j in 0..self.hidden {
            hid[j] = (w1[2 * j] * x[0] + w1[2 * j + 1] * x[1] + b1[j]).tanh();
        }
        for k in 0..self.classes {
            let row = &w2[k * self.hidden..(k + 1) * self.hidden];
            logits[k] = b2[k] + row.iter().zip(hid.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Softmax in place; returns log Σ exp.
    fn softmax(logits: &mut [f64]) -> f64 {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        logits.iter_mut().for_each(|l| *l /= sum);
        max + sum.ln()
    }

    /// Mean cross-entropy and accuracy over the listed examples.
    pub fn evaluate(&self, w: &[f64], x: &[f64], y: &[usize]) -> (f64, f64) {
        let mut hid = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        let (mut loss, mut correct) = (0.0, 0usize);
        for (xi, &yi) in x.chunks_exact(2).zip(y) {
            self.forward(w, xi, &mut hid, &mut logits);
            let target = logits[yi];
            let argmax = (0..self.classes).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
            correct += usize::from(argmax == yi);
            loss += Self::softmax(&mut logits) - target;
        }
        let n = y.len() as f64;
        (loss / n, correct as f64 / n)
    }

    /// Gradient of the mean cross-entropy over `batch` (indices into x, y).
    pub fn gradient(&self, w: &[f64], x: &[f64], y: &[usize], batch: &[usize], out: &mut [f64]) {
        out.fill(0.0);
        let (h, c) = (self.hidden, self.classes);
        let (_, _, w2, _) = self.split(w);
        let mut hid = vec![0.0; h];
        let mut p = vec![0.0; c];
        let mut dh = vec![0.0; h];
        let off_b1 = h * Self::INPUT;
        let off_w2 = off_b1 + h;
        let off_b2 = off_w2 + c * h;
        for &i in batch {
            let xi = &x[2 * i..2 * i + 2];
            self.forward(w, xi, &mut hid, &mut p);
            Self::softmax(&mut p);
            p[y[i]] -= 1.0;
            dh.fill(0.0);
            for k in 0..c {
                out[off_b2 + k] += p[k];
                for j in 0..h {
                    out[off_w2 + k * h + j] += p[k] * hid[j];
                    dh[j] += w2[k * h + j] * p[k];
                }
            }
            for j in 0..h {
                let da = dh[j] * (1.0 - hid[j] * hid[j]);
                out[2 * j] += da * xi[0];
                out[2 * j + 1] += da * xi[1];
                out[off_b1 + j] += da;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        out.iter_mut().for_each(|g| *g *= inv);
    }
}

fn default_dataset() -> Dataset {
    Dataset::TwoMoons
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_hidden() -> usize {
    16
}
fn default_n() -> usize {
    512
}
fn default_noise() -> f64 {
    0.1
}
fn default_rules() -> Vec<OptimizerConfig> {
    let mut vsgd = OptimizerConfig::new(Rule::Vsgd);
    vsgd.vsgd_scaled = true;
    let mut qvsgd = OptimizerConfig::new(Rule::Qvsgd);
    qvsgd.q = 0.5;
    vec![OptimizerConfig::new(Rule::Sgd), OptimizerConfig::new(Rule::Sam), vsgd, qvsgd]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_dataset")]
    pub dataset: Dataset,
    #[serde(default = "default_rules")]
    pub rules: Vec<OptimizerConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_test: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dataset: default_dataset(),
            rules: default_rules(),
            seeds: default_seeds(),
            hidden: default_hidden(),
            n_train: default_n(),
            n_test: default_n(),
            noise: default_noise(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rules.is_empty() || self.seeds.is_empty() {
            return Err(ConfigError::new("training.rules and training.seeds must be nonempty"));
        }
        if self.hidden == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(ConfigError::new("training.hidden, n_train and n_test must be ≥ 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(ConfigError::new("training.noise must be finite and ≥ 0"));
        }
        let model = Mlp { hidden: self.hidden, classes: self.dataset.classes() };
        if model.param_count() > 10_000 {
            return Err(ConfigError::new("training model exceeds 10⁴ parameters"));
        }
        self.rules.iter().try_for_each(OptimizerConfig::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    /// Training loss after each epoch.
    #[serde(with = "real::vec")]
    pub loss_trajectory: Vec<f64>,
    #[serde(with = "real")]
    pub final_loss: f64,
    #[serde(with = "real")]
    pub final_accuracy: f64,
    #[serde(with = "real")]
    pub train_accuracy: f64,
    pub diverged: bool,
    pub steps: u64,
    pub grad_evals: u64,
    #[serde(with = "real")]
    pub max_perturbation_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "real::option")]
    pub seconds_per_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub label: String,
    pub rule: Rule,
    pub q: f64,
    pub runs: usize,
    #[serde(with = "real")]
    pub mean_accuracy: f64,
    #[serde(with = "real")]
    pub se_accuracy: f64,
    #[serde(with = "real")]
    pub min_accuracy: f64,
    #[serde(with = "real")]
    pub mean_loss: f64,
    #[serde(with = "real")]
    pub se_loss: f64,
    pub all_finite: bool,
    #[serde(with = "real")]
    pub grad_evals_per_step: f64,
    #[serde(with = "real")]
    pub max_perturbation_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "real::option")]
    pub seconds_per_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingResult {
    pub dataset: Dataset,
    pub parameters: usize,
    pub summaries: Vec<RuleSummary>,
    pub runs: Vec<RunResult>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Shuffled order of `0..n` from `seed`.
fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = chunk_rng(seed, 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((i + 1) as f64 * open01(&mut rng)) as usize;
        idx.swap(i, j.min(i));
    }
    idx
}

/// Trains one model under `rule` with data, initialization, batch order and
/// perturbation noise all derived from `seed`.
pub fn train_once(cfg: &TrainingConfig, rule: &OptimizerConfig, seed: u64, timed: bool) -> Result<RunResult, ConfigError> {
    let model = Mlp { hidden: cfg.hidden, classes: cfg.dataset.classes() };
    let data_seed = derive_seed(seed, &[TAG_DATA]);
    let (x, y) = cfg.dataset.generate(cfg.n_train + cfg.n_test, cfg.noise, data_seed);
    let (x_train, x_test) = x.split_at(2 * cfg.n_train);
    let (y_train, y_test) = y.split_at(cfg.n_train);
    let mut w = model.init(derive_seed(seed, &[TAG_INIT]));
    let mut opt_cfg = rule.clone();
    opt_cfg.seed = derive_seed(seed, &[TAG_NOISE, rule.seed]);
    let mut opt = Optimizer::new(opt_cfg, w.len())?;

    let mut trajectory = Vec::with_capacity(rule.epochs);
    let mut grad_evals = 0u64;
    let mut max_norm: f64 = 0.0;
    let mut diverged = false;
    let mut elapsed = 0.0;
    'epochs: for epoch in 0..rule.epochs {
        let order = permutation(cfg.n_train, derive_seed(seed, &[TAG_ORDER, epoch as u64]));
        for batch in order.chunks(rule.batch_size) {
            let start = timed.then(Instant::now);
            let info = opt.step(&mut w, |p, g| model.gradient(p, x_train, y_train, batch, g));
            if let Some(t) = start {
                elapsed += t.elapsed().as_secs_f64();
            }
            match info {
                Ok(info) => {
                    grad_evals += info.grad_evals as u64;
                    max_norm = info.perturbation_norms.iter().cloned().fold(max_norm, f64::max);
                }
                Err(_) => {
                    diverged = true;
                    break 'epochs;
                }
            }
        }
        let (loss, _) = model.evaluate(&w, x_train, y_train);
        trajectory.push(loss);
        if !loss.is_finite() {
            diverged = true;
            break;
        }
    }
    let (final_loss, final_accuracy) = model.evaluate(&w, x_test, y_test);
    let (_, train_accuracy) = model.evaluate(&w, x_train, y_train);
    let steps = opt.steps_taken();
    Ok(RunResult {
        label: rule.display_label(),
        seed,
        loss_trajectory: trajectory,
        final_loss,
        final_accuracy,
        train_accuracy,
        diverged: diverged || !final_loss.is_finite(),
        steps,
        grad_evals,
        max_perturbation_norm: max_norm,
        seconds_per_step: (timed && steps > 0).then(|| elapsed / steps as f64),
    })
}

/// Trains every rule on every seed; runs fan out over `exec`.
pub fn run_toy_training<E: Executor>(cfg: &TrainingConfig, timed: bool, exec: &E) -> Result<TrainingResult, ConfigError> {
    cfg.validate()?;
    let n_seeds = cfg.seeds.len();
    let runs = exec
        .map_indexed(cfg.rules.len() * n_seeds, |k| train_once(cfg, &cfg.rules[k / n_seeds], cfg.seeds[k % n_seeds], timed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let summaries = cfg
        .rules
        .iter()
        .zip(runs.chunks(n_seeds))
        .map(|(rule, rs)| {
            let acc: Vec<f64> = rs.iter().map(|r| r.final_accuracy).collect();
            let loss: Vec<f64> = rs.iter().map(|r| r.final_loss).collect();
            let (mean_accuracy, se_accuracy) = mean_se(&acc);
            let (mean_loss, se_loss) = mean_se(&loss);
            let steps: u64 = rs.iter().map(|r| r.steps).sum();
            let evals: u64 = rs.iter().map(|r| r.grad_evals).sum();
            let seconds_per_step = timed.then(|| {
                let total: f64 = rs.iter().filter_map(|r| r.seconds_per_step.map(|s| s * r.steps as f64)).sum();
                total / steps.max(1) as f64
            });
            RuleSummary {
                label: rule.display_label(),
                rule: rule.rule,
                q: rule.q,
                runs: rs.len(),
                mean_accuracy,
                se_accuracy,
                min_accuracy: acc.iter().cloned().fold(f64::INFINITY, f64::min),
                mean_loss,
                se_loss,
                all_finite: rs.iter().all(|r| !r.diverged && r.loss_trajectory.iter().all(|l| l.is_finite())),
                grad_evals_per_step: evals as f64 / steps.max(1) as f64,
                max_perturbation_norm: rs.iter().map(|r| r.max_perturbation_norm).fold(0.0, f64::max),
                seconds_per_step,
            }
        })
        .collect();
    let parameters = Mlp { hidden: cfg.hidden, classes: cfg.dataset.classes() }.param_count();
    Ok(TrainingResult { dataset: cfg.dataset, parameters, summaries, runs })
}
