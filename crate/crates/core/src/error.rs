use thiserror::Error;

/// Failure of a single model fit, before it is tagged with the model's name.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("need at least {needed} rows to fit {needed} coefficients, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("working weights became non-finite or vanished at iteration {iteration} (complete separation)")]
    Separation { iteration: usize },
    #[error("design column {column} is linearly dependent on earlier columns")]
    Singular { column: usize },
    #[error("non-finite value in design or response")]
    NonFinite,
    #[error("labels must be 0 or 1")]
    NonBinaryLabel,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error{}: {message}", field.as_ref().map(|f| format!(" in `{f}`")).unwrap_or_default())]
    Config {
        field: Option<String>,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error at row {row}, column `{column}`: {message}")]
    Domain {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("fit of {model} failed: {source}")]
    Fit {
        model: String,
        /// Name of the offending design column, when the failure is a singularity.
        column: Option<String>,
        #[source]
        source: FitError,
    },

    #[error("positivity violation in {model}: {count} rows below floor (first rows: {rows:?})")]
    Positivity {
        model: String,
        count: usize,
        rows: Vec<usize>,
    },

    #[error("covariate arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("incompatible estimates: {0}")]
    IncompatibleEstimates(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate test: standard error is zero")]
    DegenerateTest,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{what} aborted: {failures} of {replicates} replicates failed")]
    TooManyFailures {
        what: &'static str,
        failures: usize,
        replicates: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Domain { .. }
            | Error::InvalidDataset(_)
            | Error::Precondition(_)
            | Error::Io { .. }
            | Error::Csv(_) => 3,
            Error::Fit { .. }
            | Error::Positivity { .. }
            | Error::DegenerateTest
            | Error::TooManyFailures { .. } => 4,
            _ => 5,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "data",
            4 => "fit",
            _ => "internal",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures that a resampling replicate may absorb.
    pub(crate) fn is_replicate_failure(&self) -> bool {
        matches!(
            self,
            Error::Fit { .. } | Error::Positivity { .. } | Error::InvalidDataset(_)
        )
    }
}
