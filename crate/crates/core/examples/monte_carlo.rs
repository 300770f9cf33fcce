//! Monte Carlo study of the three estimators under a chosen scenario.
//!
//! cargo run --release --example monte_carlo -- [tt|ft|tf|ff] [reps] [n_per_study]

use trialbench::data::Arm;
use trialbench::simulation::{run_monte_carlo, MonteCarloSettings, ScenarioConfig};

fn main() -> trialbench::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first().map(String::as_str).unwrap_or("tt") {
        "ft" => ScenarioConfig::truth_row(false, true),
        "tf" => ScenarioConfig::truth_row(true, false),
        "ff" => ScenarioConfig::truth_row(false, false),
        _ => ScenarioConfig::d1(),
    };
    let reps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let n = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);

    let start = std::time::Instant::now();
    let report = run_monte_carlo(&cfg, &MonteCarloSettings::new(reps, n, n, 2024))?;
    println!(
        "{}: {} replicates, n = ({n}, {n}), {:.1?}",
        report.scenario,
        report.replicates,
        start.elapsed()
    );
    println!(
        "{:<14}{:>10}{:>10}{:>10}{:>10}{:>10}",
        "quantity", "truth", "bias", "emp sd", "mean se", "cover"
    );
    for q in &report.quantities {
        println!(
            "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>10.3}",
            q.label, q.truth, q.bias, q.empirical_sd, q.mean_sandwich_se, q.coverage
        );
    }
    for a in [Arm::Treated, Arm::Control] {
        println!(
            "arm {a}: delta rejection {:.3}, restriction rejection {:.3}",
            report.delta_rejection(a),
            report.restriction_rejection(a)
        );
    }
    Ok(())
}
