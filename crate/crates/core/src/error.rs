use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates the documented precondition of an operation.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A jump was requested on a state that has no excitations left.
    #[error("no excitations left to decay")]
    NoExcitations,

    /// The requested detector has (numerically) zero click probability.
    #[error("impossible jump: detector {detector} has weight {weight:e}")]
    ImpossibleJump { detector: usize, weight: f64 },

    /// A computed quantity contradicts an invariant that holds for every
    /// valid input, e.g. a clearly negative jump weight.
    #[error("internal consistency violated: {0}")]
    Consistency(String),

    /// The requested problem exceeds a hard size guard.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// An operation was applied to a record in the wrong state.
    #[error("invalid record state: {0}")]
    RecordState(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
