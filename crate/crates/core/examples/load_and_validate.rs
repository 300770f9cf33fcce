//! Load a CSV with a column schema and run the structural checks.
//!
//! cargo run --example load_and_validate -- [path.csv]

use trialbench::data::{load_dataset, validate, ColumnSchema};

fn main() -> trialbench::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/d1.csv").to_string());
    let d = load_dataset(&path, &ColumnSchema::standard(&["X1".into()]))?;
    println!(
        "{path}: {} rows, {} trial, {} emulation",
        d.len(),
        d.n1(),
        d.n0()
    );

    let report = validate(&d);
    for c in &report.checks {
        println!("  {:<28} {:?}  {}", c.name, c.status, c.message);
    }
    println!("overall: {:?}", report.status);
    Ok(())
}
