use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The document does not match the file schema.
    #[error("parse error at `{path}`: {reason}")]
    Parse { path: String, reason: String },

    /// A descriptor, state or dimension reference could not be resolved.
    #[error("reference error at `{path}`: {reason}")]
    Reference { path: String, reason: String },

    /// A numeric value lies outside its admissible range.
    #[error("range error at `{path}`: {reason}")]
    Range { path: String, reason: String },

    /// A matrix, scenario or perturbation does not fit the descriptor layout.
    #[error("structure mismatch: {0}")]
    Structure(String),

    #[error("no feasible state for descriptor `{descriptor}`: {detail}")]
    Infeasible { descriptor: String, detail: String },

    #[error("state space has {size} scenarios, exceeding the limit of {limit}")]
    Intractable { size: u128, limit: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient candidates: {0}")]
    InsufficientCandidates(String),

    /// Input failed validation; the messages are the error findings.
    #[error("invalid input: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("translation matrix has no entry for dimension `{dimension}` in state {state}{}", period.map(|p| format!(" at period {p}")).unwrap_or_default())]
    Coverage {
        dimension: String,
        state: usize,
        period: Option<i32>,
    },

    #[error("identity `{0}` cannot be repaired: {1}")]
    Unrepairable(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn reference(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Reference {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn range(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Range {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
