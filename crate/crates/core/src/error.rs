use thiserror::Error;

/// Errors surfaced by the library.
///
/// The CLI maps these onto process exit codes: configuration and schema
/// problems exit with 2, infeasible or out-of-range targets with 3, and
/// internal invariant breaches with 4.
#[derive(Debug, Error)]
pub enum HbrdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("variable groups overlap: {0}")]
    OverlappingGroups(String),

    #[error("infeasible distortion target: {constraint} = {target} is below the minimum achievable {minimum}")]
    InfeasibleTarget {
        constraint: String,
        target: f64,
        minimum: f64,
    },

    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("internal invariant breached: {0}")]
    InternalInvariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HbrdError>;

impl HbrdError {
    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HbrdError::InvalidInput(_)
            | HbrdError::OverlappingGroups(_)
            | HbrdError::Config(_)
            | HbrdError::Io(_)
            | HbrdError::Json(_)
            | HbrdError::TooLarge(_) => 2,
            HbrdError::InfeasibleTarget { .. } | HbrdError::ParameterRange(_) => 3,
            HbrdError::InternalInvariant(_) => 4,
        }
    }
}
