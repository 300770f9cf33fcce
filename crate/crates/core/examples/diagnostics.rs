//! Restriction test and overlap summaries on a valid and a confounded
//! emulation.
//!
//! cargo run --release --example diagnostics

use trialbench::data::Arm;
use trialbench::diagnostics::{
    overlap_summary, restriction_test, RestrictionOptions, RESTRICTION_FAILURE_ALTERNATIVES,
};
use trialbench::nuisance::{fit_nuisances, FitOptions, OutcomeKind};
use trialbench::simulation::{generate, ScenarioConfig};

fn main() -> trialbench::Result<()> {
    for cfg in [ScenarioConfig::d1(), ScenarioConfig::truth_row(false, true)] {
        let d = generate(&cfg, 10_000, 10_000, 3)?;
        println!("{}", cfg.name);
        for a in Arm::BOTH {
            let r = restriction_test(&d, a, &RestrictionOptions::default())?;
            let terms: Vec<String> = r
                .study_terms
                .iter()
                .map(|t| format!("{} {:+.3} ({:.3})", t.name, t.coefficient, t.std_error))
                .collect();
            println!(
                "  arm {a}: chi2 {:.2}, p {:.4}, {:?}; {}",
                r.test.statistic,
                r.test.p_value,
                r.status,
                terms.join(", ")
            );
        }
        let nu = fit_nuisances(&d, &FitOptions::new(OutcomeKind::Continuous))?;
        let o = overlap_summary(&d, &nu, 10.0);
        for p in &o.probabilities {
            println!(
                "  {:<18} on {:<8} median {:.3}  range [{:.3}, {:.3}]",
                p.model, p.rows, p.quantiles.median, p.quantiles.min, p.quantiles.max
            );
        }
        println!("  largest inverse weight {:.3}", o.max_weight());
    }
    println!("A failed restriction is compatible with:");
    for alt in RESTRICTION_FAILURE_ALTERNATIVES {
        println!("  - {alt}");
    }
    Ok(())
}
