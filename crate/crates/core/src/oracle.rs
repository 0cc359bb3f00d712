//! Deterministic ground truth for one- and two-dimensional laws: quadrature
//! of expectations and central finite differences in the parameters.
//!
//! Integration happens in whitened coordinates `z = L⁻¹(x − μ)`, where the
//! support is the interval `[−R, R]` or the disk of radius `R`. The disk is
//! integrated in polar form (Gauss–Legendre in the radius, trapezoid in the
//! angle), so no node ever straddles the support boundary. Unbounded laws are
//! truncated at `|z|² = TAIL_S`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::battery::TestFunction;
use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Matrix};
use crate::qgauss::{EllipticalLaw, QGaussian, RadialProfile};

/// Squared whitened radius beyond which the integrand is dropped.
pub const TAIL_S: f64 = 200.0;

/// Largest dimension the oracle integrates.
pub const MAX_DIM: usize = 2;

/// Gauss–Legendre nodes and weights on [−1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if libm::fabs(dx) <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Node counts and accuracy target of the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes on the 1-D support.
    pub nodes_1d: usize,
    /// Gauss–Legendre nodes in the radius (2-D).
    pub radial_nodes: usize,
    /// Trapezoid nodes in the angle (2-D).
    pub angular_nodes: usize,
    pub target_abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes_1d: 2048, radial_nodes: 512, angular_nodes: 256, target_abs_tol: 1e-8 }
    }
}

impl QuadratureSpec {
    pub fn doubled(&self) -> Self {
        QuadratureSpec {
            nodes_1d: 2 * self.nodes_1d,
            radial_nodes: 2 * self.radial_nodes,
            angular_nodes: 2 * self.angular_nodes,
            target_abs_tol: self.target_abs_tol,
        }
    }
}

/// Quadrature rule with cached nodes.
#[derive(Debug, Clone)]
pub struct Quadrature {
    spec: QuadratureSpec,
    line: (Vec<f64>, Vec<f64>),
    radial: (Vec<f64>, Vec<f64>),
    angles: Vec<(f64, f64)>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::new(QuadratureSpec::default())
    }
}

impl Quadrature {
    pub fn new(spec: QuadratureSpec) -> Self {
        let k = spec.angular_nodes;
        let angles = (0..k)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / k as f64;
                (libm::cos(phi), libm::sin(phi))
            })
            .collect();
        Quadrature {
            spec,
            line: gauss_legendre(spec.nodes_1d),
            radial: gauss_legendre(spec.radial_nodes),
            angles,
        }
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Visits every node as `(x, weight)` where the weight already contains
    /// the density and the Jacobian. Nodes are visited in a fixed order.
    fn for_each_node<L, F>(&self, law: &L, mut visit: F) -> Result<()>
    where
        L: EllipticalLaw + ?Sized,
        F: FnMut(&[f64], f64),
    {
        let d = law.dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::OracleDimension { dim: d });
        }
        let profile = law.profile();
        let t_max = match profile {
            RadialProfile::Bounded { radius_sq, .. } => radius_sq.min(TAIL_S),
            RadialProfile::Gaussian => TAIL_S,
        };
        let r_max = libm::sqrt(t_max);
        let mu = law.location();
        let factor = law.factor();
        let mut z = [0.0; MAX_DIM];
        let mut x = [0.0; MAX_DIM];
        let place = |z: &[f64], x: &mut [f64]| {
            factor.mul_vec(z, x);
            for (xi, mi) in x.iter_mut().zip(mu) {
                *xi += mi;
            }
        };
        if d == 1 {
            let (nodes, weights) = &self.line;
            for (t, w) in nodes.iter().zip(weights) {
                z[0] = r_max * t;
                let h = profile.density(1, z[0] * z[0]);
                place(&z[..1], &mut x[..1]);
                visit(&x[..1], r_max * w * h);
            }
        } else {
            let (nodes, weights) = &self.radial;
            let dphi = 2.0 * PI / self.angles.len() as f64;
            for (t, w) in nodes.iter().zip(weights) {
                let r = 0.5 * r_max * (t + 1.0);
                let wr = 0.5 * r_max * w * r * profile.density(2, r * r) * dphi;
                for &(c, s) in &self.angles {
                    z[0] = r * c;
                    z[1] = r * s;
                    place(&z[..2], &mut x[..2]);
                    visit(&x[..2], wr);
                }
            }
        }
        Ok(())
    }

    /// ∫ g(x)·density(x) dx over the support.
    pub fn expect<L, G>(&self, law: &L, mut g: G) -> Result<f64>
    where
        L: EllipticalLaw + ?Sized,
        G: FnMut(&[f64]) -> f64,
    {
        let mut acc = 0.0;
        self.for_each_node(law, |x, w| {
            if w != 0.0 {
                acc += w * g(x);
            }
        })?;
        Ok(acc)
    }

    /// Entrywise ∫ g(x)·density(x) dx for a vector-valued `g`.
    pub fn expect_vec<L, G>(&self, law: &L, width: usize, mut g: G) -> Result<Vec<f64>>
    where
        L: EllipticalLaw + ?Sized,
        G: FnMut(&[f64], &mut [f64]),
    {
        let mut acc = vec![0.0; width];
        let mut buf = vec![0.0; width];
        self.for_each_node(law, |x, w| {
            if w != 0.0 {
                g(x, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += w * b;
                }
            }
        })?;
        Ok(acc)
    }

    /// Change in ∫p when every node count is doubled.
    pub fn self_convergence<L: EllipticalLaw + ?Sized>(&self, law: &L) -> Result<f64> {
        let fine = Quadrature::new(self.spec.doubled());
        let a = self.expect(law, |_| 1.0)?;
        let b = fine.expect(law, |_| 1.0)?;
        Ok(libm::fabs(a - b))
    }
}

/// E_p[f]
pub fn expectation(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<f64> {
    check_fn(law, f)?;
    quad.expect(law, |x| f.value(x))
}

/// E_p[(x − μ) f(x)]
pub fn stein_lhs(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    let mu = law.mu();
    quad.expect_vec(law, law.dim(), |x, out| {
        let fx = f.value(x);
        for i in 0..x.len() {
            out[i] = (x[i] - mu[i]) * fx;
        }
    })
}

/// Cov_p · E_{p★}[∇f] with the escort integrated directly.
pub fn stein_rhs(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    let escort = law.escort(1);
    let g = quad.expect_vec(&escort, law.dim(), |x, out| f.gradient(x, out))?;
    Ok(times_cov(law, &g))
}

/// Cov_p · E_p[(R² − s)∇f] / E_p[R² − s], both integrals over the base law.
pub fn stein_rhs_reweighted(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    let big_m = weight_normalizer(quad, law)?;
    let r2 = law.radius_sq();
    let mut grad = vec![0.0; law.dim()];
    let g = quad.expect_vec(law, law.dim(), |x, out| {
        let w = r2 - law.quad_form(x);
        f.gradient(x, &mut grad);
        for (o, g) in out.iter_mut().zip(&grad) {
            *o = w * g;
        }
    })?;
    let g: Vec<f64> = g.iter().map(|v| v / big_m).collect();
    Ok(times_cov(law, &g))
}

/// E_p[R² − s] by quadrature.
pub fn weight_normalizer(quad: &Quadrature, law: &QGaussian) -> Result<f64> {
    if law.is_gaussian() {
        return Err(Error::GaussianLimit { operation: "escort reweighting" });
    }
    let r2 = law.radius_sq();
    quad.expect(law, |x| r2 - law.quad_form(x))
}

/// ∇_μ E_p[f] in its closed form E_p[∇f].
pub fn bonnet(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    quad.expect_vec(law, law.dim(), |x, out| f.gradient(x, out))
}

/// ∇_Σ E_p[f] in its closed form (E_p[s]/D)·½·E_{p★}[∇²f], row-major.
pub fn price(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    if !f.has_hessian() {
        return Err(Error::MissingDerivative { what: "Hessian" });
    }
    let d = law.dim();
    let escort = law.escort(1);
    let h = quad.expect_vec(&escort, d * d, |x, out| f.hessian(x, out))?;
    let c = 0.5 * law.moments().cov_scale;
    Ok(h.iter().map(|v| c * v).collect())
}

fn times_cov(law: &QGaussian, g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    law.covariance().mul_vec(g, &mut out);
    out
}

fn check_fn(law: &QGaussian, f: &dyn TestFunction) -> Result<()> {
    if f.dim() != law.dim() {
        return Err(Error::DimensionMismatch { expected: law.dim(), found: f.dim() });
    }
    Ok(())
}

/// A scalar parameter of a q-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamCoord {
    Mu(usize),
    /// Entry (i, j) of Σ, treated as unconstrained.
    Sigma(usize, usize),
}

impl ParamCoord {
    fn value(self, law: &QGaussian, sigma: &Matrix) -> Result<f64> {
        let d = law.dim();
        match self {
            ParamCoord::Mu(i) if i < d => Ok(law.mu()[i]),
            ParamCoord::Sigma(i, j) if i < d && j < d => Ok(sigma.get(i, j)),
            ParamCoord::Mu(i) | ParamCoord::Sigma(i, _) if i >= d => Err(Error::IndexOutOfRange { index: i, len: d }),
            ParamCoord::Sigma(_, j) => Err(Error::IndexOutOfRange { index: j, len: d }),
            ParamCoord::Mu(_) => unreachable!(),
        }
    }
}

/// Central-difference step for a parameter of magnitude `theta`.
pub fn fd_step(theta: f64) -> f64 {
    1e-4 * (1.0 + libm::fabs(theta))
}

const MAX_SHRINK: usize = 30;

/// Copy of `law` with one parameter moved by `h`. For an off-diagonal Σ entry
/// both (i, j) and (j, i) move, keeping Σ symmetric.
fn perturb(law: &QGaussian, sigma: &Matrix, coord: ParamCoord, h: f64) -> Result<QGaussian> {
    match coord {
        ParamCoord::Mu(i) => {
            let mut mu = law.mu().to_vec();
            mu[i] += h;
            QGaussian::new(mu, law.factor().clone(), law.q())
        }
        ParamCoord::Sigma(i, j) => {
            let mut s = sigma.clone();
            s.set(i, j, s.get(i, j) + h);
            if i != j {
                s.set(j, i, s.get(j, i) + h);
            }
            let factor = LowerTriangular::cholesky(&s)?;
            QGaussian::new(law.mu().to_vec(), factor, law.q())
        }
    }
}

/// Central finite difference of `e` in one parameter of `law`, with step
/// `1e−4·(1 + |θ|)`, halved until both perturbed Σ stay positive definite.
///
/// Off-diagonal Σ entries are perturbed symmetrically and the difference is
/// halved, giving the derivative in the unconstrained entry.
pub fn fd_grad_param<E>(law: &QGaussian, coord: ParamCoord, mut e: E) -> Result<f64>
where
    E: FnMut(&QGaussian) -> Result<f64>,
{
    let sigma = law.sigma();
    let theta = coord.value(law, &sigma)?;
    let mut h = fd_step(theta);
    for _ in 0..MAX_SHRINK {
        match (perturb(law, &sigma, coord, h), perturb(law, &sigma, coord, -h)) {
            (Ok(plus), Ok(minus)) => {
                let diff = (e(&plus)? - e(&minus)?) / (2.0 * h);
                let off_diagonal = matches!(coord, ParamCoord::Sigma(i, j) if i != j);
                return Ok(if off_diagonal { 0.5 * diff } else { diff });
            }
            (Err(Error::NotPositiveDefinite), _) | (_, Err(Error::NotPositiveDefinite)) => h *= 0.5,
            (Err(err), _) | (_, Err(err)) => return Err(err),
        }
    }
    Err(Error::PerturbationFailed)
}

/// Finite-difference ∇_μ E_p[f] with quadrature inside.
pub fn fd_grad_mu(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    (0..law.dim())
        .map(|i| fd_grad_param(law, ParamCoord::Mu(i), |p| expectation(quad, p, f)))
        .collect()
}

/// Finite-difference ∇_Σ E_p[f] with quadrature inside, row-major.
pub fn fd_grad_sigma(quad: &Quadrature, law: &QGaussian, f: &dyn TestFunction) -> Result<Vec<f64>> {
    check_fn(law, f)?;
    let d = law.dim();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v = fd_grad_param(law, ParamCoord::Sigma(i, j), |p| expectation(quad, p, f))?;
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{Battery, CustomFunction};

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 101] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n}");
            // exact through degree 2n − 1; check the highest even degree
            let p = if n == 1 { 0 } else { 2 * n - 2 };
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
            let want = 2.0 / (p as f64 + 1.0);
            assert!((got - want).abs() < 1e-13, "n={n} got {got} want {want}");
        }
        let (x, _) = gauss_legendre(7);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn rejects_three_dimensions() {
        let p = QGaussian::standard(3, 0.5).unwrap();
        let q = Quadrature::new(QuadratureSpec { nodes_1d: 8, radial_nodes: 8, angular_nodes: 8, target_abs_tol: 1e-8 });
        assert_eq!(q.expect(&p, |_| 1.0).unwrap_err(), Error::OracleDimension { dim: 3 });
    }

    #[test]
    fn normalization_and_radial_moments() {
        let quad = Quadrature::default();
        let p = QGaussian::standard(1, 0.0).unwrap();
        let r2 = p.radius_sq();
        assert!((quad.expect(&p, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        let es = quad.expect(&p, |x| x[0] * x[0]).unwrap();
        assert!((es - r2 / 5.0).abs() < 1e-12);
        let es = quad.expect(&p.escort(1), |x| x[0] * x[0]).unwrap();
        assert!((es - r2 / 7.0).abs() < 1e-12);
        assert!(quad.self_convergence(&p).unwrap() < 1e-12);
    }

    #[test]
    fn two_dimensional_normalization_with_correlation() {
        let quad = Quadrature::default();
        let factor = LowerTriangular::from_rows(&[vec![1.3], vec![-0.4, 0.7]]).unwrap();
        let p = QGaussian::new(vec![0.5, -1.0], factor, 0.5).unwrap();
        assert!((quad.expect(&p, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        let g = QGaussian::standard(2, 1.0).unwrap();
        assert!((quad.expect(&g, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fd_examples() {
        let quad = Quadrature::default();
        let p = QGaussian::new(vec![0.3], LowerTriangular::identity(1), 0.4).unwrap();
        let id = CustomFunction::new("x", 1, |x| x[0], |_, g| g[0] = 1.0);
        let d = fd_grad_param(&p, ParamCoord::Mu(0), |l| expectation(&quad, l, &id)).unwrap();
        assert!((d - 1.0).abs() < 1e-6);
        let sq = CustomFunction::new("x2", 1, |x| x[0] * x[0], |x, g| g[0] = 2.0 * x[0]);
        let d = fd_grad_param(&p, ParamCoord::Sigma(0, 0), |l| expectation(&quad, l, &sq)).unwrap();
        assert!((d - p.moments().mean_s).abs() < 1e-5);
        let c = CustomFunction::constant(1, 2.0);
        let d = fd_grad_param(&p, ParamCoord::Mu(0), |l| expectation(&quad, l, &c)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn fd_shrinks_step_near_singular_sigma() {
        let factor = LowerTriangular::from_rows(&[vec![1e-3]]).unwrap();
        let p = QGaussian::new(vec![0.0], factor, 0.0).unwrap();
        let d = fd_grad_param(&p, ParamCoord::Sigma(0, 0), |l| Ok(l.sigma().get(0, 0))).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        assert!(matches!(
            fd_grad_param(&p, ParamCoord::Mu(4), |_| Ok(0.0)),
            Err(Error::IndexOutOfRange { index: 4, len: 1 })
        ));
    }

    #[test]
    fn stein_sides_agree() {
        let quad = Quadrature::default();
        for d in [1, 2] {
            let p = QGaussian::standard(d, 0.3).unwrap();
            for b in Battery::ALL {
                let f = b.instantiate(d);
                let lhs = stein_lhs(&quad, &p, &f).unwrap();
                let rhs = stein_rhs(&quad, &p, &f).unwrap();
                let rw = stein_rhs_reweighted(&quad, &p, &f).unwrap();
                for k in 0..d {
                    assert!((lhs[k] - rhs[k]).abs() < 1e-9, "{} d={d}", b.name());
                    assert!((rw[k] - rhs[k]).abs() < 1e-9, "{} d={d}", b.name());
                }
            }
        }
    }

    #[test]
    fn price_matches_fd_in_two_dimensions() {
        let quad = Quadrature::default();
        let factor = LowerTriangular::from_rows(&[vec![1.0], vec![0.3, 0.8]]).unwrap();
        let p = QGaussian::new(vec![0.2, -0.1], factor, 0.5).unwrap();
        let f = Battery::Sine.instantiate(2);
        let closed = price(&quad, &p, &f).unwrap();
        let fd = fd_grad_sigma(&quad, &p, &f).unwrap();
        for (a, b) in closed.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        let closed = bonnet(&quad, &p, &f).unwrap();
        let fd = fd_grad_mu(&quad, &p, &f).unwrap();
        for (a, b) in closed.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }
}
