pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod inference;
mod linalg;
pub mod nuisance;
pub mod rng;
pub mod simulation;

pub use error::{Error, FitError, Result};
