use thiserror::Error;

use crate::autodiff::DiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("action {index} is negative ({value})")]
    NegativeAction { index: usize, value: f64 },
    #[error("negative time step {0}")]
    NegativeDt(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("eigen iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNotConverged { sweeps: usize, off_norm: f64 },
    #[error("non-finite loss at step {step} (dt={dt}, l_predict={l_predict}, l_action={l_action})")]
    NonFiniteLoss {
        step: usize,
        dt: f64,
        l_predict: f64,
        l_action: f64,
    },
    #[error("non-finite latent state during integration at substep {0}")]
    NonFiniteState(usize),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("{0}")]
    Eval(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("malformed trajectory file: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
