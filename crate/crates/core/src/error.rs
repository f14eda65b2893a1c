use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two families: validation errors (bad inputs, bad
/// config, bad shapes — detectable before any real work) and runtime errors
/// (divergence, overflow, corrupt files). The CLI maps the families to exit
/// codes 1 and 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("undefined envelope fit: {0}")]
    UndefinedFit(String),

    #[error("cannot fit slope: {0}")]
    CannotFit(String),

    #[error("numeric overflow in {node}")]
    NumericOverflow { node: String },

    #[error("divergence at {context}")]
    Divergence { context: String },

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    /// Control-flow signal from the matching loss: the sampled segment has
    /// identical start and target checkpoints and carries no signal.
    #[error("segment start equals target; skip and resample")]
    SkipSegment,

    #[error("parse error at offset {offset}: {detail}")]
    Parse { offset: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors a caller could have prevented by passing valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::InfeasiblePartition(_)
                | Error::UndefinedMetric(_)
                | Error::UndefinedFit(_)
                | Error::CannotFit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
