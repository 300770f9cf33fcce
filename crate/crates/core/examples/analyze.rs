//! Programmatic equivalent of `trialbench analyze configs/analyze_d1.json`.
//!
//! cargo run --release --example analyze -- [config.json]

use std::path::PathBuf;

use trialbench::cli::{render_summary, run_analysis};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/configs/analyze_d1.json"
            ))
        });
    match run_analysis(&path) {
        Ok(report) => {
            print!("{}", render_summary(&report));
            println!(
                "\nreport written to {}",
                report.metadata.config.output.report.display()
            );
        }
        Err(e) => {
            eprintln!("{}", trialbench::cli::error_object(&e));
            std::process::exit(e.exit_code());
        }
    }
}
