//! Crate-wide error type and the exit-code mapping used by the binary.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A scenario split cannot give both sides at least one sample.
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    /// An evaluation protocol cannot be built from the given data.
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    /// A binary artifact failed validation while loading.
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: String, reason: String },

    /// An input is numerically degenerate (zero vector, all-cancelling template, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A non-finite value surfaced during training or evaluation.
    #[error("numeric fault: {0}")]
    NumericFault(String),

    /// A run configuration failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn corrupt(path: &std::path::Path, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 config/contract errors, 3 numeric faults, 4 io.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidArgument(_)
            | Error::InvalidSplit(_)
            | Error::InvalidProtocol(_)
            | Error::Config(_) => 2,
            Error::DegenerateInput(_) | Error::NumericFault(_) => 3,
            Error::CorruptFile { .. } | Error::Io(_) => 4,
        }
    }

    /// Prefix the message with the pipeline stage that raised it.
    pub fn at_stage(self, stage: &str) -> Self {
        match self {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("[{stage}] {m}")),
            Error::InvalidSplit(m) => Error::InvalidSplit(format!("[{stage}] {m}")),
            Error::InvalidProtocol(m) => Error::InvalidProtocol(format!("[{stage}] {m}")),
            Error::DegenerateInput(m) => Error::DegenerateInput(format!("[{stage}] {m}")),
            Error::NumericFault(m) => Error::NumericFault(format!("[{stage}] {m}")),
            Error::Config(m) => Error::Config(format!("[{stage}] {m}")),
            other => other,
        }
    }
}
