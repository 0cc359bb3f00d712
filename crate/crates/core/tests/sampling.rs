use proptest::prelude::*;
use qstein_core::exec::{Executor, Sequential};
use qstein_core::linalg::LowerTriangular;
use qstein_core::sampler::{sample, Source};
use qstein_core::stats::{ks_p_value, ks_statistic, RunningStats};
use qstein_core::QGaussian;
use statrs::distribution::{Beta, ContinuousCDF};

/// Runs jobs back to front but returns them in job order.
struct Backwards;

impl Executor for Backwards {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let mut out: Vec<T> = (0..n).rev().map(f).collect();
        out.reverse();
        out
    }
}

fn correlated(q: f64) -> QGaussian {
    let factor = LowerTriangular::from_rows(&[vec![1.2], vec![0.5, 0.7]]).unwrap();
    QGaussian::new(vec![1.0, -2.0], factor, q).unwrap()
}

#[test]
fn radial_law_passes_ks() {
    for q in [0.0, 0.3, 0.5, 0.8, 0.99] {
        for d in [1, 2] {
            let p = QGaussian::standard(d, q).unwrap();
            for (source, order) in [(Source::Base, 0), (Source::Escort, 1)] {
                let law = p.radial_law(order).unwrap();
                let batch = sample(&p, 100_000, 11 + d as u64, source, &Sequential).unwrap();
                let mut b: Vec<f64> = batch.s_values().iter().map(|s| s / p.radius_sq()).collect();
                let beta = Beta::new(law.alpha, law.beta).unwrap();
                let stat = ks_statistic(&mut b, |x| beta.cdf(x));
                let pv = ks_p_value(stat, b.len());
                assert!(pv > 0.01, "q={q} d={d} {source:?}: p={pv}");
            }
        }
    }
}

#[test]
fn radius_and_direction_uncorrelated() {
    let p = QGaussian::standard(3, 0.5).unwrap();
    let n = 100_000;
    let batch = sample(&p, n, 21, Source::Base, &Sequential).unwrap();
    for k in 0..3 {
        let mut acc = RunningStats::new(3);
        for (x, &s) in batch.rows().zip(batch.s_values()) {
            let r = s.sqrt();
            let u = x[k] / r;
            acc.push(&[r, u, r * u]);
        }
        let m = acc.mean();
        let v = acc.variance();
        let corr = (m[2] - m[0] * m[1]) / (v[0] * v[1]).sqrt();
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "coord {k}: {corr}");
    }
}

#[test]
fn sample_covariance_matches_closed_form() {
    let p = correlated(0.3);
    let n = 400_000;
    let batch = sample(&p, n, 5, Source::Base, &Sequential).unwrap();
    let mut acc = RunningStats::new(3);
    for x in batch.rows() {
        let (a, b) = (x[0] - 1.0, x[1] + 2.0);
        acc.push(&[a * a, a * b, b * b]);
    }
    let cov = p.covariance();
    let want = [cov.get(0, 0), cov.get(0, 1), cov.get(1, 1)];
    let se = acc.std_error();
    for k in 0..3 {
        assert!((acc.mean()[k] - want[k]).abs() < 3.0 * se[k], "entry {k}");
    }
}

#[test]
fn chunk_order_does_not_matter() {
    let p = correlated(0.5);
    let a = sample(&p, 10_000, 99, Source::Escort, &Sequential).unwrap();
    let b = sample(&p, 10_000, 99, Source::Escort, &Backwards).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn draws_stay_inside_support(q in -2.0f64..0.999, seed in any::<u64>(), escort in any::<bool>()) {
        let p = correlated(q);
        let source = if escort { Source::Escort } else { Source::Base };
        let batch = sample(&p, 500, seed, source, &Sequential).unwrap();
        for (x, &s) in batch.rows().zip(batch.s_values()) {
            prop_assert!(s < p.radius_sq());
            prop_assert!(p.quad_form(x) < p.radius_sq());
            prop_assert!((p.quad_form(x) - s).abs() <= 1e-10 * p.radius_sq());
        }
    }

    #[test]
    fn same_seed_same_batch(q in 0.0f64..0.99, seed in any::<u64>(), n in 1usize..9000) {
        let p = QGaussian::standard(2, q).unwrap();
        let a = sample(&p, n, seed, Source::Base, &Sequential).unwrap();
        let b = sample(&p, n, seed, Source::Base, &Backwards).unwrap();
        prop_assert_eq!(a, b);
    }
}
