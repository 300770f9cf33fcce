//! Draw a trial + emulation dataset from a shipped scenario and write it as CSV.
//!
//! cargo run --release --example generate_dataset -- <d1|tt|ft|tf|ff> <n_trial> <n_emulation> <seed> <out.csv>
//!
//! The shipped fixture was produced with `d1 10000 10000 7 fixtures/d1.csv`.

use trialbench::data::ColumnSchema;
use trialbench::simulation::{generate, true_values, ScenarioConfig};

fn main() -> trialbench::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 5 {
        eprintln!(
            "usage: generate_dataset <d1|tt|ft|tf|ff> <n_trial> <n_emulation> <seed> <out.csv>"
        );
        std::process::exit(2);
    }
    let cfg = match args[0].as_str() {
        "ft" => ScenarioConfig::truth_row(false, true),
        "tf" => ScenarioConfig::truth_row(true, false),
        "ff" => ScenarioConfig::truth_row(false, false),
        _ => ScenarioConfig::d1(),
    };
    let parse = |s: &str| {
        s.parse::<u64>()
            .unwrap_or_else(|_| panic!("not an integer: {s}"))
    };
    let (n1, n0, seed) = (
        parse(&args[1]) as usize,
        parse(&args[2]) as usize,
        parse(&args[3]),
    );

    let d = generate(&cfg, n1, n0, seed)?;
    d.save_csv(&ColumnSchema::standard(d.covariate_names()), &args[4])?;
    let t = true_values(&cfg)?;
    println!(
        "{}: wrote {} rows to {} (E[Y^1|S=0] = {:.5}, E[Y^0|S=0] = {:.5})",
        cfg.name,
        d.len(),
        args[4],
        t.potential_outcome_means[1],
        t.potential_outcome_means[0]
    );
    Ok(())
}
