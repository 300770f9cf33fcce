use proptest::prelude::*;
use trialbench::data::{Arm, Dataset, Stratum};
use trialbench::nuisance::{
    expit, fit_linear, fit_logistic, fit_nuisances, Design, FitOptions, IrlsOptions, ModelName,
    LL_SLACK,
};
use trialbench::simulation::{generate, ScenarioConfig};
use trialbench::{Error, FitError};

#[test]
fn randomized_trial_propensity_is_flat() {
    // only the trial's arm model matters here; the emulation is a token sample
    let d = generate(&ScenarioConfig::d1(), 100_000, 2_000, 21).unwrap();
    let nu = fit_nuisances(&d, &FitOptions::default()).unwrap();
    for x in [0.0, 1.0] {
        let p = nu.propensity_s1.predict(&[x]).unwrap();
        assert!((p - 0.5).abs() < 0.01, "{p}");
    }
}

#[test]
fn no_treated_emulation_rows_names_the_model() {
    let d = Dataset::new(
        vec!["X1".into()],
        vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        vec![1, 1, 1, 0, 0, 0],
        vec![1, 0, 1, 0, 0, 0],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    )
    .unwrap();
    match fit_nuisances(&d, &FitOptions::default()).unwrap_err() {
        Error::Fit { model, .. } => assert_eq!(model, "propensity_s0"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn pooled_treated_outcome_model_recovers_generating_law() {
    // E[Y | X, A=1] = 1 + X + 2 + X = 3 + 2X in both studies
    let d = generate(&ScenarioConfig::d1(), 100_000, 100_000, 5).unwrap();
    let nu = fit_nuisances(&d, &FitOptions::default()).unwrap();
    let b = nu.outcome(Arm::Treated, Stratum::Pooled).coefficients();
    assert!(
        (b[0] - 3.0).abs() < 0.05 && (b[1] - 2.0).abs() < 0.05,
        "{b:?}"
    );
}

#[test]
fn model_names_cover_every_nuisance() {
    let names: Vec<String> = ModelName::all().iter().map(|m| m.to_string()).collect();
    assert_eq!(names.len(), 10);
    for n in &names {
        assert_eq!(&n.parse::<ModelName>().unwrap().to_string(), n);
    }
}

fn logistic_problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (20usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(-3.0f64..3.0, n),
            proptest::collection::vec(0.0f64..1.0, n),
            -1.5f64..1.5,
            -1.5f64..1.5,
        )
            .prop_map(|(x, u, b0, b1)| {
                let y = x
                    .iter()
                    .zip(&u)
                    .map(|(&xi, &ui)| (ui < expit(b0 + b1 * xi)) as u8 as f64)
                    .collect();
                (x, y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn irls_monotone_with_small_score((x, y) in logistic_problem()) {
        let design = Design::with_intercept(x.iter().map(std::slice::from_ref)).unwrap();
        match fit_logistic(&design, &y, &IrlsOptions::default()) {
            Ok(m) => {
                for w in m.trace.windows(2) {
                    prop_assert!(w[1] >= w[0] - LL_SLACK * (1.0 + w[0].abs()));
                }
                if m.converged {
                    prop_assert!(m.score_norm < 1e-8);
                }
                for xi in [-1e3, -3.0, 0.0, 3.0, 1e3] {
                    let p = m.predict(&[xi]).unwrap();
                    prop_assert!(p > 0.0 && p < 1.0);
                }
            }
            Err(e) => {
                let expected = matches!(e, FitError::Separation { .. } | FitError::SingleClass);
                prop_assert!(expected, "unexpected {}", e);
            }
        }
    }

    #[test]
    fn least_squares_residuals_are_orthogonal(
        rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -50.0f64..50.0), 5..100)
    ) {
        let xs: Vec<[f64; 2]> = rows.iter().map(|r| [r.0, r.1]).collect();
        let design = Design::with_intercept(xs.iter().map(|r| r.as_slice())).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        if let Ok(m) = fit_linear(&design, &y) {
            let n = rows.len() as f64;
            let resid: Vec<f64> = rows.iter().map(|r| r.2 - m.predict(&[r.0, r.1]).unwrap()).collect();
            for j in 0..3 {
                let dot: f64 = (0..rows.len()).map(|i| design.row(i)[j] * resid[i]).sum();
                prop_assert!(dot.abs() / n < 1e-8, "column {} dot {}", j, dot);
            }
        }
    }
}
