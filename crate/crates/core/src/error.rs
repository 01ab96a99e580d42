use thiserror::Error;

use crate::model::PacketId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown packet id {0}")]
    UnknownPacket(PacketId),

    #[error("row {row} of the transition matrix is not stochastic (sum {sum})")]
    NonStochastic { row: usize, sum: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("instance too large for the reference LP ({states} states x {packets} packets)")]
    InstanceTooLarge { states: usize, packets: usize },

    #[error("LP solver failed: {0}")]
    Lp(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnknownPacket(_)
                | Error::NonStochastic { .. }
                | Error::Config(_)
        )
    }
}
