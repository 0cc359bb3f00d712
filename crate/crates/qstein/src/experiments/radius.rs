//! Support radius R(q, D) as a function of dimension.

use qstein_core::qgauss::radius_sq;
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::io::real;

fn default_qs() -> Vec<f64> {
    vec![0.0, 0.5, 0.8, 0.9, 0.99]
}
fn default_d_max() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    #[serde(default = "default_qs")]
    pub qs: Vec<f64>,
    #[serde(default = "default_d_max")]
    pub d_max: usize,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        RadiusConfig { qs: default_qs(), d_max: default_d_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub q: f64,
    /// R(q, D) for D = 1..=d_max.
    #[serde(with = "real::vec")]
    pub radius: Vec<f64>,
    pub monotone_in_d: bool,
    /// Every D > 1 with R(q, D) ≤ R(q, D − 1).
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusTable {
    pub d_max: usize,
    pub rows: Vec<RadiusRow>,
}

impl RadiusTable {
    pub fn all_monotone(&self) -> bool {
        self.rows.iter().all(|r| r.monotone_in_d)
    }
}

/// Indices `D` (1-based) at which a sequence indexed from D = 1 fails to increase.
pub fn monotonicity_violations(values: &[f64]) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !(w[1] > w[0]))
        .map(|(i, _)| i + 2)
        .collect()
}

/// Tabulates R(q, D) for D = 1..=d_max and checks that each row increases in D.
/// A failed check is reported in the row, not raised.
pub fn run_radius_curve(cfg: &RadiusConfig) -> Result<RadiusTable, ConfigError> {
    if cfg.d_max == 0 || cfg.qs.is_empty() {
        return Err(ConfigError::new("radius.d_max must be ≥ 1 and radius.qs nonempty"));
    }
    let mut rows = Vec::with_capacity(cfg.qs.len());
    for &q in &cfg.qs {
        if !(q < 1.0) {
            return Err(ConfigError::new(format!("radius.qs must be < 1, got {q}")));
        }
        let radius = (1..=cfg.d_max)
            .map(|d| radius_sq(q, d).map(f64::sqrt))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::new(e.to_string()))?;
        let violations = monotonicity_violations(&radius);
        rows.push(RadiusRow { q, monotone_in_d: violations.is_empty(), radius, violations });
    }
    Ok(RadiusTable { d_max: cfg.d_max, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry_and_single_source() {
        let t = run_radius_curve(&RadiusConfig { qs: vec![0.0, 0.5], d_max: 20 }).unwrap();
        assert!((t.rows[0].radius[0] - 1.5f64.powf(1.0 / 3.0)).abs() < 1e-12);
        for row in &t.rows {
            for (k, r) in row.radius.iter().enumerate() {
                assert_eq!(*r, radius_sq(row.q, k + 1).unwrap().sqrt());
            }
        }
    }

    #[test]
    fn small_dimensions_dip() {
        let t = run_radius_curve(&RadiusConfig { qs: vec![0.0], d_max: 10 }).unwrap();
        assert!(!t.rows[0].monotone_in_d);
        assert_eq!(t.rows[0].violations, vec![2, 3, 4]);
    }

    #[test]
    fn high_dimensions_have_similar_radii() {
        let t = run_radius_curve(&RadiusConfig { qs: vec![0.0, 0.5, 0.8], d_max: 200 }).unwrap();
        let at200: Vec<f64> = t.rows.iter().map(|r| r.radius[199]).collect();
        let spread = at200.iter().cloned().fold(f64::MIN, f64::max) - at200.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.1 * at200[0], "{at200:?}");
    }

    #[test]
    fn rejects_gaussian_row() {
        assert!(run_radius_curve(&RadiusConfig { qs: vec![1.0], d_max: 3 }).is_err());
    }

    #[test]
    fn violations_are_one_based() {
        assert_eq!(monotonicity_violations(&[1.0, 0.5, 0.7, 0.7]), vec![2, 4]);
    }
}
