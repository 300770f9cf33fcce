//! Double-robustness grid on the canonical scenario: each cell omits the
//! covariate from a set of nuisance models; all cells share the replicate
//! datasets.
//!
//! cargo run --release --example double_robustness -- [reps] [n_per_study]

use trialbench::data::{Arm, Stratum};
use trialbench::estimators::Estimator;
use trialbench::nuisance::{Misspecification, ModelName};
use trialbench::simulation::{run_monte_carlo_grid, MonteCarloSettings, ScenarioConfig};

fn main() -> trialbench::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reps = args.first().and_then(|s| s.parse().ok()).unwrap_or(50);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);

    let outcome: Vec<ModelName> = Arm::BOTH
        .iter()
        .flat_map(|&a| {
            [Stratum::Emulation, Stratum::Trial, Stratum::Pooled].map(|s| ModelName::Outcome(a, s))
        })
        .collect();
    let design = vec![
        ModelName::Participation,
        ModelName::Propensity(Stratum::Emulation),
        ModelName::Propensity(Stratum::Trial),
        ModelName::Propensity(Stratum::Pooled),
    ];
    let with = |extra: &[ModelName]| [outcome.clone(), extra.to_vec()].concat();
    let cells: Vec<(&str, Vec<ModelName>)> = vec![
        ("none", vec![]),
        ("outcome", outcome.clone()),
        ("design", design.clone()),
        ("participation", vec![ModelName::Participation]),
        (
            "pooled propensity",
            vec![ModelName::Propensity(Stratum::Pooled)],
        ),
        ("outcome + participation", with(&[ModelName::Participation])),
        (
            "outcome + pooled propensity",
            with(&[ModelName::Propensity(Stratum::Pooled)]),
        ),
        ("everything", with(&design)),
    ];
    let specs: Vec<Option<Misspecification>> = cells
        .iter()
        .map(|(_, models)| {
            (!models.is_empty()).then(|| Misspecification {
                models: models.clone(),
                covariate: 0,
            })
        })
        .collect();

    let start = std::time::Instant::now();
    let settings = MonteCarloSettings::new(reps, n, n, 7);
    let reports = run_monte_carlo_grid(&ScenarioConfig::d1(), &settings, &specs)?;
    println!(
        "{reps} replicates at n = ({n}, {n}) in {:.1?}; bias (MC SE) of the arm-1 mean",
        start.elapsed()
    );
    println!(
        "{:<30}{:>18}{:>18}{:>18}",
        "omitted from", "phi", "chi", "psi"
    );
    for ((name, _), r) in cells.iter().zip(&reports) {
        print!("{name:<30}");
        for est in Estimator::ALL {
            let q = r.estimator(est, Arm::Treated);
            print!("{:>18}", format!("{:+.4} ({:.4})", q.bias, q.mc_se));
        }
        println!();
    }
    Ok(())
}
