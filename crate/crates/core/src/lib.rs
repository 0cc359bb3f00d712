//! Bounded-support q-Gaussian distributions and their Stein-type gradient
//! estimators.
//!
//! A bounded-support q-Gaussian (q < 1) is the Pearson type II elliptical law
//!
//! ```text
//! p(x) ∝ |Σ|^{-1/2} (R² − s(x))₊^m,   s(x) = (x − μ)ᵀ Σ⁻¹ (x − μ),   m = 1/(1 − q)
//! ```
//!
//! whose support radius `R` depends only on `q` and the dimension. Its first
//! associated law (the `(2 − q)`-escort `p★ ∝ p^{2−q}`) carries the exponent
//! `m + 1` and is what appears on the right-hand side of the Stein identity
//!
//! ```text
//! E_p[(x − μ) f(x)] = Cov_p(x) · E_{p★}[∇f(x)].
//! ```
//!
//! The crate is `no_std` (with `alloc`) and covers:
//!
//! - [`qgauss`]: parameter validation, densities, support radius, escort laws
//!   and closed-form radial moments,
//! - [`sampler`]: exact draws from `p` and `p★` through the radial
//!   decomposition `x = μ + L·r·u`,
//! - [`estimators`]: Stein-identity evaluators, location/scale pathwise
//!   gradients and the reweighted bounded-variance estimators,
//! - [`oracle`]: deterministic quadrature and finite-difference ground truth
//!   for one and two dimensions.
//!
//! Parallelism is injected through the [`exec::Executor`] trait; every
//! reduction runs over fixed-size chunks merged in chunk order, so results do
//! not depend on how many workers ran them.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod battery;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod linalg;
pub mod oracle;
pub mod qgauss;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{GradEstimate, SteinVariant};
pub use exec::{Executor, Sequential};
pub use linalg::{LowerTriangular, Matrix};
pub use qgauss::{EscortLaw, LogDensity, Moments, QGaussian, RadialLaw};
pub use sampler::{SampleBatch, Source};
