use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("KL divergence undefined: q[{index}] = 0 while p[{index}] > 0")]
    KlDomain { index: usize },

    #[error("multiplicative update degenerated (non-finite log-weights)")]
    NumericOverflow,

    #[error("observed loss {0} outside [0, 1]")]
    LossOutOfRange(f64),

    #[error("state index {state} out of range for {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action index {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("horizon {horizon} exhausted")]
    HorizonExhausted { horizon: u64 },

    #[error("{solver} did not certify within {iterations} iterations (gap {gap:e})")]
    Uncertified {
        solver: &'static str,
        iterations: usize,
        gap: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
