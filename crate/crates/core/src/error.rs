use thiserror::Error;

/// Errors produced by the section, estimation and testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("generator set is empty")]
    EmptyGenerators,

    #[error("tessellation has no cells")]
    EmptyTessellation,

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("duplicate point at index {0}")]
    DuplicatePoint(usize),

    #[error("filtration is not monotone at simplex {0}")]
    NonMonotoneFiltration(usize),

    #[error("cannot reach {target} cells by shrinking the window (have {available})")]
    InfeasibleTarget { target: usize, available: usize },

    #[error("no replicate produced exactly {n_2d} section cells ({diagnostics})")]
    InfeasibleConditioning { n_2d: usize, diagnostics: String },

    #[error("null table {0} is not cached; pass --build-null to simulate it")]
    MissingNullTable(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 3 when conditioning on the cell count is
    /// infeasible, 2 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleConditioning { .. } | Error::InfeasibleTarget { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
