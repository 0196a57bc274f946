use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A superposition cancelled to (numerically) nothing.
    #[error("destructive cancellation: superposition norm {norm:e} is below {floor:e}")]
    Cancellation { norm: f64, floor: f64 },

    /// The branch tree grew past its guard.
    #[error(
        "branch explosion: more than {limit} surviving branches at history time {level}; \
         use a coarser graining or raise the prune threshold"
    )]
    BranchExplosion { limit: usize, level: usize },

    /// A record/history dimension guard was exceeded.
    #[error("dimension guard: {0}")]
    DimensionGuard(String),

    /// The time-ordered wavefunction stream skipped or ended early.
    #[error("wavefunction stream gap: {0}")]
    StreamGap(String),

    #[error("empty ensemble: {0}")]
    EmptyEnsemble(String),

    /// History label spaces of two tables do not match.
    #[error("label space mismatch: {0}")]
    LabelMismatch(String),

    #[error("position outside the box: {0}")]
    OutsideBox(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of numerical guards (as opposed to bad input or IO).
    pub fn is_numerical_guard(&self) -> bool {
        matches!(self, Error::Cancellation { .. } | Error::BranchExplosion { .. } | Error::DimensionGuard(_))
    }
}
