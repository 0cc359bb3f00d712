//! Identity battery: checks the Stein, Bonnet and Price identities of a law
//! against the quadrature oracle, deterministically and by Monte Carlo.

use qstein_core::battery::{Battery, TestFunction};
use qstein_core::estimators::{self, GradEstimate, SteinVariant};
use qstein_core::exec::Executor;
use qstein_core::oracle::{self, Quadrature, MAX_DIM};
use qstein_core::sampler::{sample, Source};
use qstein_core::{Error, QGaussian};
use serde::{Deserialize, Serialize};

use crate::io::real;

/// Quadrature LHS against quadrature RHS.
pub const TOL_QUAD_STEIN: f64 = 1e-7;
/// Escort quadrature against reweighted base quadrature.
pub const TOL_QUAD_REWEIGHT: f64 = 1e-8;
/// Finite differences against closed-form gradients, relative to max(‖ref‖, 1).
pub const TOL_FD: f64 = 1e-6;
/// Monte Carlo discrepancy allowed, in standard errors.
pub const MC_SIGMAS: f64 = 4.0;
/// Additive slack on Monte Carlo checks for contributions with zero spread.
const MC_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub identity: String,
    pub function: String,
    /// Largest absolute entrywise discrepancy.
    #[serde(with = "real")]
    pub discrepancy: f64,
    /// Bound the discrepancy was held to.
    #[serde(with = "real")]
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub q: f64,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub seed: u64,
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:<14} {:>14} {:>14}  result\n", "identity", "function", "discrepancy", "tolerance");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<28} {:<14} {:>14.3e} {:>14.3e}  {}\n",
                r.identity,
                r.function,
                r.discrepancy,
                r.tolerance,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn row(identity: &str, function: &str, discrepancy: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        identity: identity.into(),
        function: function.into(),
        discrepancy,
        tolerance,
        pass: discrepancy <= tolerance,
    }
}

/// Monte Carlo estimate against a reference: passes when every entry is
/// within `MC_SIGMAS` standard errors (plus a tiny floor).
fn mc_row(identity: &str, function: &str, est: &GradEstimate, truth: &[f64]) -> CheckRow {
    let se = est.std_error();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut out = row(identity, function, 0.0, 0.0);
    for k in 0..truth.len() {
        let diff = (est.value[k] - truth[k]).abs();
        let tol = MC_SIGMAS * se[k] + MC_FLOOR * truth[k].abs().max(1.0);
        if diff - tol > worst_excess {
            worst_excess = diff - tol;
            out = row(identity, function, diff, tol);
        }
    }
    out
}

/// Runs the battery for `law` (dimension ≤ 2) with `samples` Monte Carlo
/// draws per estimator. Draw streams are derived from `seed`.
pub fn verify_law<E: Executor>(
    law: &QGaussian,
    samples: usize,
    seed: u64,
    quad: &Quadrature,
    exec: &E,
) -> Result<VerifyReport, Error> {
    let d = law.dim();
    if d > MAX_DIM {
        return Err(Error::OracleDimension { dim: d });
    }
    let base = sample(law, samples, seed, Source::Base, exec)?;
    let escort = sample(law, samples, seed.wrapping_add(1), Source::Escort, exec)?;
    let bounded = !law.is_gaussian();
    let mut rows = Vec::new();
    for b in Battery::ALL {
        let f = b.instantiate(d);
        let name = f.name();
        let lhs = oracle::stein_lhs(quad, law, &f)?;
        let rhs = oracle::stein_rhs(quad, law, &f)?;
        rows.push(row("stein/quadrature", name, max_abs_diff(&lhs, &rhs), TOL_QUAD_STEIN));
        if bounded {
            let rw = oracle::stein_rhs_reweighted(quad, law, &f)?;
            rows.push(row("stein/reweighted-quadrature", name, max_abs_diff(&rw, &rhs), TOL_QUAD_REWEIGHT));
        }

        let closed = oracle::bonnet(quad, law, &f)?;
        let fd = oracle::fd_grad_mu(quad, law, &f)?;
        rows.push(row("bonnet/fd", name, max_abs_diff(&fd, &closed), TOL_FD * max_abs(&closed).max(1.0)));
        let closed_sigma = oracle::price(quad, law, &f)?;
        let fd = oracle::fd_grad_sigma(quad, law, &f)?;
        rows.push(row("price/fd", name, max_abs_diff(&fd, &closed_sigma), TOL_FD * max_abs(&closed_sigma).max(1.0)));

        let est = estimators::stein_lhs(law, &f, &base, exec)?;
        rows.push(mc_row("stein/mc-lhs", name, &est, &rhs));
        let est = estimators::stein_rhs(law, &f, SteinVariant::EscortBatch, &escort, exec)?;
        rows.push(mc_row("stein/mc-escort", name, &est, &rhs));
        if bounded {
            let est = estimators::stein_rhs(law, &f, SteinVariant::POnlyReweighted, &base, exec)?;
            rows.push(mc_row("stein/mc-p-only", name, &est, &rhs));
        }
        let est = estimators::grad_mu_on(law, &f, &base, exec)?;
        rows.push(mc_row("bonnet/mc", name, &est, &closed));
        let est = estimators::grad_sigma_on(law, &f, &escort, exec)?;
        rows.push(mc_row("price/mc", name, &est, &closed_sigma));
    }
    Ok(VerifyReport { q: law.q(), d, s: samples, seed, rows })
}
