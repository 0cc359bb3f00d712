//! Test functions with analytic derivatives, and the named built-in battery.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// A scalar function with its gradient and, optionally, its Hessian.
///
/// `gradient_bound` and `hessian_bound` are suprema of ‖∇f‖₂ and ‖∇²f‖_op
/// that hold on all of R^D (and therefore on any support); `None` when no
/// global bound exists.
pub trait TestFunction: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn has_hessian(&self) -> bool {
        false
    }

    /// Row-major D×D Hessian. Only called when `has_hessian` is true.
    fn hessian(&self, _x: &[f64], _out: &mut [f64]) {
        unimplemented!("{} has no Hessian", self.name())
    }

    fn gradient_bound(&self) -> Option<f64> {
        None
    }

    fn hessian_bound(&self) -> Option<f64> {
        None
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Test function assembled from closures.
pub struct CustomFunction {
    name: &'static str,
    dim: usize,
    value: ValueFn,
    gradient: VecFn,
    hessian: Option<VecFn>,
    gradient_bound: Option<f64>,
    hessian_bound: Option<f64>,
}

impl CustomFunction {
    pub fn new(
        name: &'static str,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        CustomFunction {
            name,
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: None,
            gradient_bound: None,
            hessian_bound: None,
        }
    }

    pub fn with_hessian(mut self, hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }

    pub fn with_bounds(mut self, gradient: Option<f64>, hessian: Option<f64>) -> Self {
        self.gradient_bound = gradient;
        self.hessian_bound = hessian;
        self
    }

    /// f(x) = c
    pub fn constant(dim: usize, c: f64) -> Self {
        CustomFunction::new("constant", dim, move |_| c, |_, g| g.fill(0.0))
            .with_hessian(|_, h| h.fill(0.0))
            .with_bounds(Some(0.0), Some(0.0))
    }
}

impl fmt::Debug for CustomFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunction").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl TestFunction for CustomFunction {
    fn name(&self) -> &str {
        self.name
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
    fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match &self.hessian {
            Some(h) => h(x, out),
            None => unimplemented!("{} has no Hessian", self.name),
        }
    }
    fn gradient_bound(&self) -> Option<f64> {
        self.gradient_bound
    }
    fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }
}

/// Names of the built-in battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Battery {
    /// Σᵢ xᵢ² + Σ_{i<j} xᵢxⱼ + Σᵢ xᵢ
    Poly2,
    /// Σᵢ (xᵢ⁴ − 2xᵢ³ + xᵢ) + Σ_{i<j} xᵢ²xⱼ
    Poly4,
    /// sin(x₁)·Π_{i≥2} cos(xᵢ)
    Sine,
    /// Σᵢ tanh(xᵢ)
    TanhSum,
    /// Mean binary cross-entropy of a fixed 16-point design, as a function of the weights.
    LogisticLoss,
}

impl Battery {
    pub const ALL: [Battery; 5] =
        [Battery::Poly2, Battery::Poly4, Battery::Sine, Battery::TanhSum, Battery::LogisticLoss];

    pub fn name(self) -> &'static str {
        match self {
            Battery::Poly2 => "poly2",
            Battery::Poly4 => "poly4",
            Battery::Sine => "sine",
            Battery::TanhSum => "tanh_sum",
            Battery::LogisticLoss => "logistic_loss",
        }
    }

    pub fn from_name(name: &str) -> Option<Battery> {
        Battery::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn instantiate(self, dim: usize) -> BatteryFunction {
        let logistic = match self {
            Battery::LogisticLoss => Some(LogisticDesign::new(dim)),
            _ => None,
        };
        BatteryFunction { kind: self, dim, logistic }
    }
}

impl fmt::Display for Battery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const LOGISTIC_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
struct LogisticDesign {
    rows: Vec<f64>,
    labels: Vec<f64>,
    grad_bound: f64,
    hess_bound: f64,
}

impl LogisticDesign {
    fn new(dim: usize) -> Self {
        let mut rows = Vec::with_capacity(LOGISTIC_POINTS * dim);
        let mut labels = Vec::with_capacity(LOGISTIC_POINTS);
        let mut norm_sum = 0.0;
        let mut norm_sq_sum = 0.0;
        for i in 0..LOGISTIC_POINTS {
            let mut n2 = 0.0;
            let mut score = 0.0;
            for j in 0..dim {
                let a = 1.5 * libm::sin(1.3 * (i + 1) as f64 + 0.7 * (j + 1) as f64);
                rows.push(a);
                n2 += a * a;
                score += a * if j % 2 == 0 { 1.0 } else { -0.5 };
            }
            // mostly separable with a few flipped labels
            let y = if (score > 0.0) ^ (i % 5 == 0) { 1.0 } else { 0.0 };
            labels.push(y);
            norm_sum += libm::sqrt(n2);
            norm_sq_sum += n2;
        }
        let n = LOGISTIC_POINTS as f64;
        LogisticDesign { rows, labels, grad_bound: norm_sum / n, hess_bound: 0.25 * norm_sq_sum / n }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-libm::fabs(z)))
}

/// A battery member bound to a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryFunction {
    kind: Battery,
    dim: usize,
    logistic: Option<LogisticDesign>,
}

impl BatteryFunction {
    pub fn kind(&self) -> Battery {
        self.kind
    }

    // a_i(x) for the product sin(x₁)Π cos(xᵢ) and its first two derivatives
    fn sine_factors(x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut a = vec![0.0; n];
        let mut da = vec![0.0; n];
        let mut dda = vec![0.0; n];
        for i in 0..n {
            let (s, c) = (libm::sin(x[i]), libm::cos(x[i]));
            if i == 0 {
                a[i] = s;
                da[i] = c;
                dda[i] = -s;
            } else {
                a[i] = c;
                da[i] = -s;
                dda[i] = -c;
            }
        }
        (a, da, dda)
    }
}

impl TestFunction for BatteryFunction {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.dim;
        match self.kind {
            Battery::Poly2 => {
                let mut v = 0.0;
                for i in 0..n {
                    v += x[i] * x[i] + x[i];
                    for j in (i + 1)..n {
                        v += x[i] * x[j];
                    }
                }
                v
            }
            Battery::Poly4 => {
                let mut v = 0.0;
                for i in 0..n {
                    let xi = x[i];
                    v += xi * xi * xi * xi - 2.0 * xi * xi * xi + xi;
                    for j in (i + 1)..n {
                        v += xi * xi * x[j];
                    }
                }
                v
            }
            Battery::Sine => {
                let (a, _, _) = Self::sine_factors(x);
                a.iter().product()
            }
            Battery::TanhSum => x.iter().map(|v| libm::tanh(*v)).sum(),
            Battery::LogisticLoss => {
                let d = self.logistic.as_ref().expect("logistic design");
                let mut total = 0.0;
                for (row, y) in d.rows.chunks_exact(n).zip(&d.labels) {
                    let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    total += softplus(z) - y * z;
                }
                total / LOGISTIC_POINTS as f64
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match self.kind {
            Battery::Poly2 => {
                let sum: f64 = x.iter().sum();
                for k in 0..n {
                    // 2x_k + Σ_{j≠k} x_j + 1
                    out[k] = x[k] + sum + 1.0;
                }
            }
            Battery::Poly4 => {
                for k in 0..n {
                    let xk = x[k];
                    let mut g = 4.0 * xk * xk * xk - 6.0 * xk * xk + 1.0;
                    for j in (k + 1)..n {
                        g += 2.0 * xk * x[j];
                    }
                    for i in 0..k {
                        g += x[i] * x[i];
                    }
                    out[k] = g;
                }
            }
            Battery::Sine => {
                let (a, da, _) = Self::sine_factors(x);
                for k in 0..n {
                    let mut g = da[k];
                    for (i, ai) in a.iter().enumerate() {
                        if i != k {
                            g *= ai;
                        }
                    }
                    out[k] = g;
                }
            }
            Battery::TanhSum => {
                for k in 0..n {
                    let t = libm::tanh(x[k]);
                    out[k] = 1.0 - t * t;
                }
            }
            Battery::LogisticLoss => {
                let d = self.logistic.as_ref().expect("logistic design");
                out[..n].fill(0.0);
                for (row, y) in d.rows.chunks_exact(n).zip(&d.labels) {
                    let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    let r = sigmoid(z) - y;
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += r * a;
                    }
                }
                let inv = 1.0 / LOGISTIC_POINTS as f64;
                out[..n].iter_mut().for_each(|o| *o *= inv);
            }
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match self.kind {
            Battery::Poly2 => {
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = if i == j { 2.0 } else { 1.0 };
                    }
                }
            }
            Battery::Poly4 => {
                for k in 0..n {
                    let xk = x[k];
                    let mut h = 12.0 * xk * xk - 12.0 * xk;
                    for j in (k + 1)..n {
                        h += 2.0 * x[j];
                    }
                    out[k * n + k] = h;
                    for l in (k + 1)..n {
                        out[k * n + l] = 2.0 * xk;
                        out[l * n + k] = 2.0 * xk;
                    }
                }
            }
            Battery::Sine => {
                let (a, da, dda) = Self::sine_factors(x);
                for k in 0..n {
                    for l in 0..n {
                        let mut h = if k == l { dda[k] } else { da[k] * da[l] };
                        for (i, ai) in a.iter().enumerate() {
                            if i != k && i != l {
                                h *= ai;
                            }
                        }
                        out[k * n + l] = h;
                    }
                }
            }
            Battery::TanhSum => {
                out[..n * n].fill(0.0);
                for k in 0..n {
                    let t = libm::tanh(x[k]);
                    out[k * n + k] = -2.0 * t * (1.0 - t * t);
                }
            }
            Battery::LogisticLoss => {
                let d = self.logistic.as_ref().expect("logistic design");
                out[..n * n].fill(0.0);
                for row in d.rows.chunks_exact(n) {
                    let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    let s = sigmoid(z);
                    let w = s * (1.0 - s);
                    for i in 0..n {
                        for j in 0..n {
                            out[i * n + j] += w * row[i] * row[j];
                        }
                    }
                }
                let inv = 1.0 / LOGISTIC_POINTS as f64;
                out[..n * n].iter_mut().for_each(|o| *o *= inv);
            }
        }
    }

    fn gradient_bound(&self) -> Option<f64> {
        match self.kind {
            Battery::Poly2 | Battery::Poly4 => None,
            // the gradient terms are a subset of the expansion of Π(cos² + sin²) = 1
            Battery::Sine => Some(1.0),
            Battery::TanhSum => Some(libm::sqrt(self.dim as f64)),
            Battery::LogisticLoss => self.logistic.as_ref().map(|d| d.grad_bound),
        }
    }

    fn hessian_bound(&self) -> Option<f64> {
        match self.kind {
            Battery::Poly2 | Battery::Poly4 => None,
            // D ≤ 2: eigenvalues are −sin(x₁ ± x₂); otherwise entries are bounded by 1
            Battery::Sine => Some(if self.dim <= 2 { 1.0 } else { self.dim as f64 }),
            // max |2t(1 − t²)| at t = 1/√3
            Battery::TanhSum => Some(4.0 / (3.0 * libm::sqrt(3.0))),
            Battery::LogisticLoss => self.logistic.as_ref().map(|d| d.hess_bound),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{chunk_rng, open01};

    fn check_derivatives(f: &dyn TestFunction, scale: f64) {
        let n = f.dim();
        let mut rng = chunk_rng(77, n as u64);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| scale * (2.0 * open01(&mut rng) - 1.0)).collect();
            f.gradient(&x, &mut g);
            f.hessian(&x, &mut h);
            let step = 1e-5 * scale;
            for k in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += step;
                xm[k] -= step;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * step);
                assert!(
                    (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0),
                    "{} grad[{k}]: {fd} vs {}",
                    f.name(),
                    g[k]
                );
                let mut gp = vec![0.0; n];
                let mut gm = vec![0.0; n];
                f.gradient(&xp, &mut gp);
                f.gradient(&xm, &mut gm);
                for l in 0..n {
                    let fd = (gp[l] - gm[l]) / (2.0 * step);
                    let an = h[l * n + k];
                    assert!(
                        (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                        "{} hess[{l},{k}]: {fd} vs {an}",
                        f.name()
                    );
                }
            }
            for i in 0..n {
                for j in 0..n {
                    assert!((h[i * n + j] - h[j * n + i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn battery_derivatives_match_finite_differences() {
        for b in Battery::ALL {
            for d in [1usize, 2, 3, 5] {
                check_derivatives(&b.instantiate(d), 1.5);
            }
        }
    }

    #[test]
    fn bounds_hold_on_random_points() {
        let mut rng = chunk_rng(78, 0);
        for b in [Battery::Sine, Battery::TanhSum, Battery::LogisticLoss] {
            for d in [1usize, 2] {
                let f = b.instantiate(d);
                let (c1, c2) = (f.gradient_bound().unwrap(), f.hessian_bound().unwrap());
                let mut g = vec![0.0; d];
                let mut h = vec![0.0; d * d];
                for _ in 0..2000 {
                    let x: Vec<f64> = (0..d).map(|_| 8.0 * (2.0 * open01(&mut rng) - 1.0)).collect();
                    f.gradient(&x, &mut g);
                    f.hessian(&x, &mut h);
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!(gn <= c1 + 1e-12);
                    let op = if d == 1 {
                        h[0].abs()
                    } else {
                        let (a, b2, c) = (h[0], h[1], h[3]);
                        let mid = 0.5 * (a + c);
                        let rad = (0.25 * (a - c) * (a - c) + b2 * b2).sqrt();
                        (mid + rad).abs().max((mid - rad).abs())
                    };
                    assert!(op <= c2 + 1e-12, "{} op {op} > {c2}", f.name());
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for b in Battery::ALL {
            assert_eq!(Battery::from_name(b.name()), Some(b));
        }
        assert_eq!(Battery::from_name("cubic"), None);
    }

    #[test]
    fn one_dimensional_forms() {
        let p2 = Battery::Poly2.instantiate(1);
        assert_eq!(p2.value(&[2.0]), 6.0);
        let s = Battery::Sine.instantiate(1);
        assert!((s.value(&[0.3]) - 0.3f64.sin()).abs() < 1e-16);
        let s2 = Battery::Sine.instantiate(2);
        assert!((s2.value(&[0.3, 0.4]) - 0.3f64.sin() * 0.4f64.cos()).abs() < 1e-16);
    }
}
