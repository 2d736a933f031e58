use thiserror::Error;

pub type Result<T, E = StsoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StsoError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular linear system (zero pivot at row {0})")]
    SingularSolve(usize),
    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },
    #[error("recording does not match the current policy: {0}")]
    StaleRecording(String),
    #[error("iteration {iteration} aborted: {diverged} of {rollouts} rollouts diverged")]
    Aborted { iteration: u64, diverged: usize, rollouts: usize },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StsoError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        StsoError::Config { path: path.into(), message: message.into() }
    }
}
