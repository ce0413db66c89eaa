use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("altitude {0} m is outside the air-to-ground model's domain")]
    Altitude(f64),
    #[error("3-D distance {0} m must be positive")]
    Distance(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}

impl NnError {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        NnError::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("action index {index} out of range for an action space of {size}")]
    OutOfRange { index: usize, size: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint header `{0}` (expected `uaco-ckpt v1`)")]
    Version(String),
    #[error("checkpoint was written for config digest {found}, current config has {expected}; pass --force to load anyway")]
    Digest { expected: String, found: String },
    #[error("malformed checkpoint at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-level error for operations that span modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
