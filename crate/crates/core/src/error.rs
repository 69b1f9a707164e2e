use std::path::PathBuf;

/// Errors surfaced by the engine.
///
/// The variants follow the failure classes callers need to tell apart: bad
/// inputs versus bad configuration versus numerical breakdown during a run.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("duplicate self-loop on node {0}")]
    DuplicateSelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("label leakage: node {0} is not a training node")]
    Leakage(usize),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("gradient oracle error: {0}")]
    Oracle(String),

    #[error("run diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by an invalid configuration rather than by the
    /// run itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Load { .. } | Error::Validation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
