use trialbench::data::Arm;
use trialbench::estimators::Estimator;
use trialbench::inference::AnalysisPlan;
use trialbench::nuisance::{Misspecification, ModelName};
use trialbench::simulation::{
    generate, observed_functionals, run_monte_carlo, run_monte_carlo_grid, true_values,
    MonteCarloSettings, ScenarioConfig,
};

#[test]
fn enumeration_matches_brute_force_average() {
    let cfg = ScenarioConfig::d1();
    let t = true_values(&cfg).unwrap();
    let n = 10_000_000;
    let d = generate(&cfg, 1, n, 77).unwrap();
    for a in [0u8, 1] {
        let vals: Vec<f64> = d
            .rows()
            .filter(|r| r.s == 0)
            .map(|r| cfg.outcome_mean(r.x, a, 0.0, 0.0))
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let truth = t.potential_outcome_means[a as usize];
        assert!(
            (mean - truth).abs() < 3.0 * se,
            "arm {a}: {mean} vs {truth} (se {se})"
        );
    }
}

#[test]
fn truth_rows_set_condition_flags() {
    for (emulation, transport) in [(true, true), (false, true), (true, false), (false, false)] {
        let t = true_values(&ScenarioConfig::truth_row(emulation, transport)).unwrap();
        assert_eq!(
            (t.emulation_exchangeable, t.transport_exchangeable),
            (emulation, transport)
        );
        assert_eq!(t.restriction_holds, emulation && transport);
        assert_eq!(
            t.ate,
            t.potential_outcome_means[1] - t.potential_outcome_means[0]
        );
    }
}

#[test]
fn estimators_converge_to_observed_functionals() {
    // under violations each estimator targets its own functional, not the truth
    let cfg = ScenarioConfig::truth_row(false, false);
    let (n1, n0) = (100_000, 100_000);
    let f = observed_functionals(&cfg, n1 as f64 / (n1 + n0) as f64).unwrap();
    let d = generate(&cfg, n1, n0, 3).unwrap();
    let (_, est) = AnalysisPlan::default().evaluate(&d).unwrap();
    for (arm, e, v) in &est.estimates {
        assert!(
            (v.value - f.get(*e, *arm)).abs() < 0.03,
            "{}: {} vs {}",
            v.label,
            v.value,
            f.get(*e, *arm)
        );
    }
}

#[test]
fn grid_cells_match_single_runs() {
    let cfg = ScenarioConfig::d1();
    let spec = Misspecification {
        models: vec![
            ModelName::Participation,
            ModelName::Outcome(Arm::Treated, trialbench::data::Stratum::Trial),
        ],
        covariate: 0,
    };
    let settings = MonteCarloSettings::new(6, 500, 500, 3);
    let grid = run_monte_carlo_grid(&cfg, &settings, &[None, Some(spec.clone())]).unwrap();
    assert_eq!(grid[0], run_monte_carlo(&cfg, &settings).unwrap());
    let single = run_monte_carlo(
        &cfg,
        &MonteCarloSettings {
            misspecification: Some(spec),
            ..settings
        },
    )
    .unwrap();
    assert_eq!(grid[1], single);
}

#[test]
fn monte_carlo_report_is_well_formed() {
    let r = run_monte_carlo(
        &ScenarioConfig::d1(),
        &MonteCarloSettings::new(20, 1_000, 1_000, 11),
    )
    .unwrap();
    assert_eq!(r.replicates + r.failures, r.replicates_requested);
    for q in &r.quantities {
        assert!((0.0..=1.0).contains(&q.coverage));
        assert!(q.empirical_sd.is_finite() && q.mean_sandwich_se > 0.0);
    }
    assert!(r.max_centering_residual < 1e-8);
    assert!(r.estimator(Estimator::Psi, Arm::Control).truth > 1.4);
}

#[test]
fn monte_carlo_is_deterministic() {
    let settings = MonteCarloSettings::new(8, 500, 500, 5);
    let cfg = ScenarioConfig::truth_row(false, true);
    let a = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_monte_carlo(&cfg, &settings));
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_monte_carlo(&cfg, &settings));
    assert_eq!(a.unwrap(), b.unwrap());
}

#[test]
fn config_round_trips_through_json() {
    for cfg in [
        ScenarioConfig::d1(),
        ScenarioConfig::truth_row(false, false),
    ] {
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), cfg);
    }
    let shipped = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/configs/simulate_truth_ft.json"
    ))
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&shipped).unwrap();
    let cfg: ScenarioConfig = serde_json::from_value(v["scenario"].clone()).unwrap();
    assert_eq!(cfg, ScenarioConfig::truth_row(false, true));
}
