use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("epsilon floor {epsilon} is infeasible for {actions} actions (must be <= {max})")]
    InfeasibleFloor {
        epsilon: f64,
        actions: usize,
        max: f64,
    },

    #[error("invalid logged step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },

    #[error("history is empty")]
    EmptyHistory,

    #[error("expected a {expected} history")]
    HistoryKind { expected: &'static str },

    #[error("context {0} does not appear in the history")]
    UnseenContext(usize),

    #[error("grid must contain at least one positive value")]
    EmptyGrid,

    #[error("KL {kl} exceeds the admissible threshold {threshold} of the optimized Bernstein bound")]
    InadmissibleKl { kl: f64, threshold: f64 },

    #[error("bound inapplicable at t={t}, eps={eps}, beta={beta}: admissible KL threshold {threshold} < 0")]
    BoundInapplicable {
        t: usize,
        eps: f64,
        beta: f64,
        threshold: f64,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for violated mathematical preconditions, as opposed to I/O and
    /// parse failures.
    pub fn is_precondition(&self) -> bool {
        !matches!(self, Error::Parse { .. } | Error::Json(_) | Error::Io(_))
    }
}
