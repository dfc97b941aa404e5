mod common;

use calatt::el_solver::{lik_estimator, LikVariant};
use calatt::estimators::{evaluate_cell, CellSpec};
use calatt::models::{fit_or, fit_ps, Link, RegressorSpec};
use calatt::{Dataset, EstimatorKind};
use proptest::prelude::*;

use common::invariants::{dataset, residuals};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimating_equations_hold(seed in 0u64..1_000_000) {
        let res = residuals(&dataset(seed)).map_err(TestCaseError::fail)?;
        for (name, r) in res {
            prop_assert!(r <= 1e-8, "{name}: {r:e}");
        }
    }

    #[test]
    fn att_is_affine_equivariant(seed in 0u64..1_000_000, a in -50.0f64..50.0, b in 0.1f64..20.0) {
        let d = dataset(seed);
        let moved = d.with_outcome(d.y().iter().map(|y| a + b * y).collect()).unwrap();
        let cell = CellSpec::new(RegressorSpec::linear(&["x1", "x2"]), RegressorSpec::squares(&["x1", "x2"]));
        let kinds = [
            EstimatorKind::Or,
            EstimatorKind::IpwRatio,
            EstimatorKind::Aipw,
            EstimatorKind::Reg2,
            EstimatorKind::Lik,
            EstimatorKind::Lik2,
            EstimatorKind::Hir,
            EstimatorKind::AipwHir,
        ];
        let base = evaluate_cell(&d, &cell, &kinds);
        let shifted = evaluate_cell(&moved, &cell, &kinds);
        for ((k, x), (_, y)) in base.into_iter().zip(shifted) {
            if let (Ok(x), Ok(y)) = (x, y) {
                let want = b * x.att;
                prop_assert!((y.att - want).abs() <= 1e-6 * want.abs().max(b), "{k}: {} vs {}", y.att, want);
            }
        }
    }

    #[test]
    fn likelihood_means_stay_in_outcome_range(
        rows in prop::collection::vec((-2.0f64..2.0, 0.0f64..1.0, -5.0f64..5.0), 30..80),
        binary in any::<bool>(),
    ) {
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let t: Vec<f64> = rows.iter().map(|r| if r.1 < 1.0 / (1.0 + (-r.0).exp()) { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| if binary { f64::from(u8::from(r.2 > r.0)) } else { r.2 + r.0 * r.0 })
            .collect();
        prop_assume!(t.iter().sum::<f64>() >= 5.0 && t.iter().filter(|v| **v == 0.0).count() >= 5);
        let d = Dataset::new(y, t, vec![("x".into(), x)]).unwrap();
        let spec = RegressorSpec::linear(&["x"]);
        let (Ok(ps), Ok(o0), Ok(o1)) = (fit_ps(&spec, Link::Logistic, &d), fit_or(&spec, &d, 0), fit_or(&spec, &d, 1)) else {
            return Ok(());
        };
        for v in [LikVariant::Lik, LikVariant::Lik2] {
            if let Ok(e) = lik_estimator(&d, &ps, &o0, &o1, v) {
                for (nu, arm) in [(e.nu0, 0u8), (e.nu1, 1u8)] {
                    let (lo, hi) = d.arm_range(arm).unwrap();
                    prop_assert!(nu >= lo - 1e-12 * lo.abs().max(1.0) && nu <= hi + 1e-12 * hi.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn replicate_runs_are_identical() {
    let d = dataset(5);
    let cell = CellSpec::new(RegressorSpec::linear(&["x1", "x2"]), RegressorSpec::linear(&["x1", "x2"]));
    let a = evaluate_cell(&d, &cell, &EstimatorKind::ALL);
    let b = evaluate_cell(&d, &cell, &EstimatorKind::ALL);
    for ((_, x), (_, y)) in a.into_iter().zip(b) {
        assert_eq!(x.map(|o| o.att.to_bits()), y.map(|o| o.att.to_bits()));
    }
}
