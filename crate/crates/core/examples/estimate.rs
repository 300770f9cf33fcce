//! The three estimators, the treatment effects and the benchmarking
//! contrast on the fixture, with sandwich intervals.
//!
//! cargo run --example estimate

use trialbench::data::{load_dataset, Arm, ColumnSchema};
use trialbench::estimators::{contrast, Estimator, EstimatorOptions};
use trialbench::inference::sandwich_ci;
use trialbench::nuisance::{fit_nuisances, FitOptions, OutcomeKind};

fn main() -> trialbench::Result<()> {
    let d = load_dataset(
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/d1.csv"),
        &ColumnSchema::standard(&["X1".into()]),
    )?;
    let nu = fit_nuisances(&d, &FitOptions::new(OutcomeKind::Continuous))?;

    for hajek in [false, true] {
        let opts = EstimatorOptions {
            hajek,
            ..Default::default()
        };
        println!("{} weights", if hajek { "normalized" } else { "plain" });
        for est in Estimator::ALL {
            let treated = est.estimate(&d, &nu, Arm::Treated, &opts)?;
            let control = est.estimate(&d, &nu, Arm::Control, &opts)?;
            let ate = contrast(&treated, &control)?;
            let ci = sandwich_ci(&ate, 0.95)?;
            println!(
                "  {:<8} {:.4}  {:<8} {:.4}  effect {:.4} [{:.4}, {:.4}]",
                treated.label,
                treated.value,
                control.label,
                control.value,
                ate.value,
                ci.lower,
                ci.upper
            );
        }
        let phi = Estimator::Phi.estimate(&d, &nu, Arm::Treated, &opts)?;
        let chi = Estimator::Chi.estimate(&d, &nu, Arm::Treated, &opts)?;
        let delta = contrast(&phi, &chi)?;
        let ci = sandwich_ci(&delta, 0.95)?;
        println!(
            "  phi(1) - chi(1) = {:+.4} [{:.4}, {:.4}]",
            delta.value, ci.lower, ci.upper
        );
    }
    Ok(())
}
