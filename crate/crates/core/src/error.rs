use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} of variable `{variable}` is outside its bin range")]
    OutOfRange { variable: String, value: f64 },

    #[error("variable `{0}` has a constant column; cannot build uniform bins")]
    DegenerateColumn(String),

    #[error("unknown category `{category}` for variable `{variable}`")]
    UnknownCategory { variable: String, category: String },

    #[error("missing value for variable `{variable}` in row {row}")]
    MissingValue { variable: String, row: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite input to network: {0}")]
    NumericInput(String),

    #[error("activation cache does not match network: {0}")]
    StaleCache(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("unreachable Gibbs context while updating variable {variable}")]
    UnreachableContext { variable: usize },

    #[error("exact structure search supports at most {limit} variables, got {got}; use greedy search")]
    ExactSearchLimit { limit: usize, got: usize },

    #[error("distributions are not comparable: {0}")]
    Incomparable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Divergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidSchema(_) | Error::Json(_) => ErrorClass::Config,
            Error::Divergence(_) | Error::NumericInput(_) => ErrorClass::Divergence,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}
