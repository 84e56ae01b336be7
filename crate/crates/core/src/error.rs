use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("cannot step an absorbed state")]
    AbsorbedState,
    #[error("state does not belong to this model family")]
    StateMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid subsolution: {0}")]
    InvalidSubsolution(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("importance function is {value} at the start; it must be positive")]
    StartBelowFirstLevel { value: f64 },
    #[error("hamiltonian overflow at the given momentum")]
    HamiltonianOverflow,
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("linear solve did not converge after {sweeps} sweeps (last relative change {change:e})")]
    NoConvergence { sweeps: usize, change: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("every run hit the particle cap ({capped} runs); no estimate")]
    Unstable { capped: usize },
}
