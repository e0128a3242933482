use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong representation,
    /// mismatched grids, missing tree factor, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is invalid or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The requested regime is outside what the schemes support.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A complex square root crossed its branch cut between two quadrature nodes.
    #[error("branch discontinuity at node {node}: argument moved from {from} to {to}")]
    Branch { node: usize, from: String, to: String },

    /// A run would allocate more than the configured memory budget.
    #[error("estimated footprint {estimate_mb} MiB exceeds the {limit_mb} MiB limit")]
    Memory { estimate_mb: u64, limit_mb: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
