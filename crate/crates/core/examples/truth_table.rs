//! The four truth-value rows for the emulation and transport conditions:
//! what the conditions are, whether the restriction holds, and how often
//! benchmarking and the restriction test reject.
//!
//! cargo run --release --example truth_table -- [reps] [n_per_study]

use trialbench::data::Arm;
use trialbench::estimators::Estimator;
use trialbench::simulation::{run_monte_carlo, MonteCarloSettings, ScenarioConfig};

fn main() -> trialbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    println!(
        "{:<10}{:>11}{:>11}{:>13}{:>12}{:>14}{:>12}{:>12}",
        "row",
        "emulation",
        "transport",
        "restriction",
        "delta rej",
        "restrict rej",
        "phi bias",
        "chi bias"
    );
    for (emulation, transport) in [(true, true), (false, true), (true, false), (false, false)] {
        let cfg = ScenarioConfig::truth_row(emulation, transport);
        let r = run_monte_carlo(&cfg, &MonteCarloSettings::new(reps, n, n, 31))?;
        let flag = |b: bool| if b { "T" } else { "F" };
        println!(
            "{:<10}{:>11}{:>11}{:>13}{:>12.3}{:>14.3}{:>12.4}{:>12.4}",
            cfg.name,
            flag(r.truths.emulation_exchangeable),
            flag(r.truths.transport_exchangeable),
            if r.truths.restriction_holds {
                "holds"
            } else {
                "need not"
            },
            r.delta_rejection(Arm::Treated),
            r.restriction_rejection(Arm::Treated),
            r.estimator(Estimator::Phi, Arm::Treated).bias,
            r.estimator(Estimator::Chi, Arm::Treated).bias,
        );
    }
    Ok(())
}
