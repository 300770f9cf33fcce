use proptest::prelude::*;
use trialbench::data::{Arm, Dataset};
use trialbench::estimators::{contrast, Estimator, EstimatorOptions};
use trialbench::inference::AnalysisPlan;
use trialbench::nuisance::{fit_nuisances, FitOptions};
use trialbench::simulation::{generate, true_values, ScenarioConfig};

const TRUTH_Y1: f64 = 3.80262;
const TRUTH_ATE: f64 = 2.40131;

#[test]
fn large_sample_d1_estimates() {
    let d = generate(&ScenarioConfig::d1(), 100_000, 100_000, 41).unwrap();
    let t = true_values(&ScenarioConfig::d1()).unwrap();
    assert!((t.mean(Arm::Treated) - TRUTH_Y1).abs() < 1e-5);
    let nu = fit_nuisances(&d, &FitOptions::default()).unwrap();
    let opts = EstimatorOptions::default();
    let est = |e: Estimator, a| e.estimate(&d, &nu, a, &opts).unwrap();
    for e in Estimator::ALL {
        let v = est(e, Arm::Treated).value;
        assert!((v - TRUTH_Y1).abs() < 0.03, "{e}: {v}");
    }
    let delta = contrast(
        &est(Estimator::Phi, Arm::Treated),
        &est(Estimator::Chi, Arm::Treated),
    )
    .unwrap();
    assert!(delta.value.abs() < 0.05, "delta {}", delta.value);
    let ate = contrast(
        &est(Estimator::Phi, Arm::Treated),
        &est(Estimator::Phi, Arm::Control),
    )
    .unwrap();
    assert!((ate.value - TRUTH_ATE).abs() < 0.05, "ate {}", ate.value);
}

#[test]
fn self_contrast_is_exactly_zero() {
    let d = generate(&ScenarioConfig::d1(), 300, 300, 2).unwrap();
    let nu = fit_nuisances(&d, &FitOptions::default()).unwrap();
    let e = Estimator::Chi
        .estimate(&d, &nu, Arm::Control, &EstimatorOptions::default())
        .unwrap();
    let c = contrast(&e, &e).unwrap();
    assert_eq!(c.value, 0.0);
    assert!(c.if_values.iter().all(|&v| v == 0.0));
}

#[test]
fn hajek_and_plain_agree_to_first_order() {
    let d = generate(&ScenarioConfig::d1(), 20_000, 20_000, 9).unwrap();
    let nu = fit_nuisances(&d, &FitOptions::default()).unwrap();
    for e in Estimator::ALL {
        let plain = e
            .estimate(&d, &nu, Arm::Treated, &EstimatorOptions::default())
            .unwrap();
        let hajek = e
            .estimate(
                &d,
                &nu,
                Arm::Treated,
                &EstimatorOptions {
                    hajek: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!((plain.value - hajek.value).abs() < 0.01, "{e}");
        assert!(hajek.centering_residual() < 1e-8);
    }
}

fn scenario_dataset() -> impl Strategy<Value = Dataset> {
    (0usize..4, 100usize..400, 100usize..400, any::<u64>()).prop_map(|(row, n1, n0, seed)| {
        let cfg = match row {
            0 => ScenarioConfig::d1(),
            1 => ScenarioConfig::truth_row(false, true),
            2 => ScenarioConfig::truth_row(true, false),
            _ => ScenarioConfig::truth_row(false, false),
        };
        generate(&cfg, n1, n0, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn influence_curves_are_centered(d in scenario_dataset(), hajek in any::<bool>()) {
        let plan = AnalysisPlan {
            estimation: EstimatorOptions { hajek, ..Default::default() },
            ..AnalysisPlan::default()
        };
        if let Ok((_, est)) = plan.evaluate(&d) {
            for e in est.all() {
                prop_assert!(e.centering_residual() < 1e-8, "{} residual {}", e.label, e.centering_residual());
            }
        }
    }

    #[test]
    fn location_equivariance(d in scenario_dataset(), c in -100.0f64..100.0) {
        let shifted = d.with_outcome(d.y().iter().map(|y| y + c).collect()).unwrap();
        let plan = AnalysisPlan::default();
        if let (Ok((_, base)), Ok((_, moved))) = (plan.evaluate(&d), plan.evaluate(&shifted)) {
            for (arm, est, e) in &base.estimates {
                let m = moved.estimate(*arm, *est).unwrap();
                prop_assert!((m.value - e.value - c).abs() < 1e-10 * (1.0 + c.abs()));
            }
            for a in Arm::BOTH {
                let (d0, d1) = (base.delta(a).unwrap().value, moved.delta(a).unwrap().value);
                prop_assert!((d0 - d1).abs() < 1e-10 * (1.0 + c.abs()));
            }
        }
    }
}
