use thiserror::Error;

/// Errors raised by the scheduling library.
#[derive(Debug, Error)]
pub enum IdncError {
    #[error("receiver index {index} out of range 1..={max}")]
    ReceiverOutOfRange { index: usize, max: usize },

    #[error("packet index {index} out of range 1..={max}")]
    PacketOutOfRange { index: usize, max: usize },

    #[error("receiver {receiver} already has packet {packet}")]
    AlreadyHas { receiver: usize, packet: usize },

    #[error("outcome vector has {got} entries, expected {expected}")]
    OutcomeLength { got: usize, expected: usize },

    #[error("invalid feedback matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid session config: {0}")]
    InvalidConfig(String),

    #[error("no receiver wants a packet; nothing to schedule")]
    NothingToSchedule,

    #[error("scheduler `{0}` needs a policy table")]
    NeedsPolicy(String),

    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),

    #[error("state space of {count} states exceeds cap {cap}")]
    StateCapExceeded { count: u128, cap: u64 },

    #[error("{m}x{n} matrix does not fit a 64-bit state id")]
    StateIdOverflow { m: usize, n: usize },

    #[error("erasure probability of receiver {receiver} is {eps}, must lie in [0, 1)")]
    BadErasure { receiver: usize, eps: f64 },

    #[error("{solver} did not converge within {iterations} iterations")]
    NotConverged { solver: &'static str, iterations: usize },

    #[error("policy table has no entry for state {0}")]
    UnknownState(u64),

    #[error("run did not complete within {0} slots")]
    SlotCapExceeded(usize),

    #[error("traces come from different configurations")]
    MixedTraces,

    #[error("empty trace list")]
    NoTraces,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IdncError>;
