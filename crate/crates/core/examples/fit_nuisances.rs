//! Fit every nuisance model on the fixture and print the coefficients.
//!
//! cargo run --example fit_nuisances

use trialbench::data::{load_dataset, ColumnSchema};
use trialbench::nuisance::{fit_nuisances, FitOptions, OutcomeKind};

fn main() -> trialbench::Result<()> {
    let d = load_dataset(
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/d1.csv"),
        &ColumnSchema::standard(&["X1".into()]),
    )?;
    let nu = fit_nuisances(&d, &FitOptions::new(OutcomeKind::Continuous))?;
    for m in nu.summaries(d.covariate_names()) {
        let coefs: Vec<String> = m.coefficients.iter().map(|c| format!("{c:+.4}")).collect();
        println!(
            "{:<20} {:<9} rows {:>6}  converged {:<5}  [{}]",
            m.name.to_string(),
            m.family,
            m.n_rows,
            m.converged,
            coefs.join(", ")
        );
    }
    println!("Pr[S=1 | X1=1] = {:.4}", nu.participation.predict(&[1.0])?);
    Ok(())
}
