use qstein_core::battery::{Battery, TestFunction};
use qstein_core::estimators::{self, SteinVariant};
use qstein_core::exec::Sequential;
use qstein_core::linalg::LowerTriangular;
use qstein_core::oracle::{self, Quadrature};
use qstein_core::sampler::{sample, Source};
use qstein_core::QGaussian;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
}

#[test]
fn frozen_expectations() {
    // reference values from 30-digit adaptive quadrature
    let quad = Quadrature::default();
    let p = QGaussian::standard(1, 0.5).unwrap();
    let sine = Battery::Sine.instantiate(1);
    let lhs = oracle::stein_lhs(&quad, &p, &sine).unwrap();
    assert!((lhs[0] - 0.35724058198951559).abs() < 1e-12);
    let e = quad.expect(&p, |x| x[0].cos()).unwrap();
    assert!((e - 0.80554968701257917).abs() < 1e-12);
    let e = quad.expect(&p.escort(1), |x| x[0].cos()).unwrap();
    assert!((e - 0.84649096026047770).abs() < 1e-12);

    let p2 = QGaussian::new(vec![0.3, -0.2], LowerTriangular::identity(2), 0.5).unwrap();
    let e = oracle::expectation(&quad, &p2, &Battery::Sine.instantiate(2)).unwrap();
    assert!((e - 0.21020427585904584).abs() < 1e-12);
}

#[test]
fn quadrature_stein_identity_over_battery() {
    let quad = Quadrature::default();
    for q in [0.0, 0.3, 0.5, 0.8, 0.99] {
        let laws = [
            QGaussian::new(vec![0.2], LowerTriangular::from_rows(&[vec![0.9]]).unwrap(), q).unwrap(),
            QGaussian::new(
                vec![0.1, -0.4],
                LowerTriangular::from_rows(&[vec![1.1], vec![0.3, 0.8]]).unwrap(),
                q,
            )
            .unwrap(),
        ];
        for p in &laws {
            for b in Battery::ALL {
                let f = b.instantiate(p.dim());
                let lhs = oracle::stein_lhs(&quad, p, &f).unwrap();
                let rhs = oracle::stein_rhs(&quad, p, &f).unwrap();
                let rw = oracle::stein_rhs_reweighted(&quad, p, &f).unwrap();
                assert!(close(&lhs, &rhs, 1e-7), "{} q={q} d={}", b.name(), p.dim());
                assert!(close(&rw, &rhs, 1e-8), "{} q={q} d={}", b.name(), p.dim());
            }
        }
    }
}

#[test]
fn bonnet_and_price_closed_forms_match_finite_differences() {
    let quad = Quadrature::default();
    let p = QGaussian::new(
        vec![0.3, -0.2],
        LowerTriangular::from_rows(&[vec![0.9], vec![-0.2, 1.1]]).unwrap(),
        0.5,
    )
    .unwrap();
    for b in Battery::ALL {
        let f = b.instantiate(2);
        let fd = oracle::fd_grad_mu(&quad, &p, &f).unwrap();
        let closed = oracle::bonnet(&quad, &p, &f).unwrap();
        assert!(close(&fd, &closed, 1e-6), "{}", b.name());
        let fd = oracle::fd_grad_sigma(&quad, &p, &f).unwrap();
        let closed = oracle::price(&quad, &p, &f).unwrap();
        assert!(close(&fd, &closed, 1e-6), "{}: {fd:?} {closed:?}", b.name());
    }
}

#[test]
fn monte_carlo_stein_variants_agree_with_oracle() {
    let quad = Quadrature::default();
    let n = 200_000;
    for (q, d) in [(0.0, 1), (0.5, 2)] {
        let p = QGaussian::standard(d, q).unwrap();
        let base = sample(&p, n, 3, Source::Base, &Sequential).unwrap();
        let esc = sample(&p, n, 4, Source::Escort, &Sequential).unwrap();
        for b in [Battery::Poly2, Battery::TanhSum, Battery::LogisticLoss] {
            let f = b.instantiate(d);
            let truth = oracle::stein_rhs(&quad, &p, &f).unwrap();
            let estimates = [
                estimators::stein_lhs(&p, &f, &base, &Sequential).unwrap(),
                estimators::stein_rhs(&p, &f, SteinVariant::EscortBatch, &esc, &Sequential).unwrap(),
                estimators::stein_rhs(&p, &f, SteinVariant::POnlyReweighted, &base, &Sequential).unwrap(),
            ];
            for est in &estimates {
                let se = est.std_error();
                for k in 0..d {
                    assert!(
                        (est.value[k] - truth[k]).abs() < 4.0 * se[k].max(1e-15),
                        "{} {:?} q={q}",
                        f.name(),
                        est.estimator
                    );
                }
            }
        }
    }
}
