use thiserror::Error;

use crate::ampr::AmprState;
use crate::gamp::GampState;
use crate::se::SeState;

/// Last finite iterate of a solver that blew up.
#[derive(Debug, Clone)]
pub enum LastState {
    Ampr(AmprState),
    Gamp(GampState),
    Se(SeState),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize, last: Box<LastState> },

    #[error("no feasible state-evolution fixed point in the search domain: {0}")]
    InfeasibleDomain(String),

    #[error("objective is not finite at any vertex of the initial simplex")]
    InvalidStart,

    #[error("sample is degenerate (constant)")]
    DegenerateSample,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
