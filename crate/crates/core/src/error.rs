//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value or combination of values violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A finite-difference probe would produce an invalid parameter set
    /// (e.g. a compression window with `alpha_u <= alpha_l`).
    #[error("degenerate probe: {0}")]
    DegenerateProbe(String),

    /// The frame is misclassified at the initial reconstruction parameters,
    /// so there is nothing to attack (override with `allow_misclassified`).
    #[error(
        "frame is initially misclassified (label {label}, model output {prob}); \
         pass allow_misclassified to attack it anyway"
    )]
    InitiallyMisclassified { label: u8, prob: f64 },

    /// An external scorer process misbehaved (bad exit status, unparseable
    /// or out-of-range output). Carries the raw output for diagnosis.
    #[error("external model error: {0}")]
    ExternalModel(String),

    /// A file did not match the expected on-disk format.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
