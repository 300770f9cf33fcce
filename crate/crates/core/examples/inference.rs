//! Sandwich and stratified-bootstrap inference for a full analysis plan.
//!
//! cargo run --release --example inference -- [B] [seed]

use trialbench::data::{load_dataset, Arm, ColumnSchema};
use trialbench::inference::{bootstrap, sandwich_ci, wald_test, AnalysisPlan};

fn main() -> trialbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let b = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let d = load_dataset(
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/d1.csv"),
        &ColumnSchema::standard(&["X1".into()]),
    )?;
    let plan = AnalysisPlan::default();
    let (_, est) = plan.evaluate(&d)?;
    let boot = bootstrap(&d, &plan, b, seed)?;

    println!(
        "{:<10}{:>10}{:>12}{:>12}{:>26}",
        "quantity", "value", "sandwich se", "boot se", "percentile 95%"
    );
    for e in est.all() {
        let sw = sandwich_ci(e, 0.95)?;
        let bt = boot[&e.label].percentile_interval(e.value, 0.95)?;
        println!(
            "{:<10}{:>10.4}{:>12.4}{:>12.4}{:>26}",
            e.label,
            e.value,
            sw.std_error,
            bt.std_error,
            format!("[{:.4}, {:.4}]", bt.lower, bt.upper)
        );
    }
    for a in Arm::BOTH {
        let t = wald_test(est.delta(a).expect("phi and chi planned"), 0.0)?;
        println!(
            "benchmarking arm {a}: z = {:+.3}, p = {:.4}",
            t.statistic, t.p_value
        );
    }
    Ok(())
}
