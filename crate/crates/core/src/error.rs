//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency {freq} Hz out of range (0, {nyquist}) for fs = {fs} Hz")]
    FrequencyOutOfRange { freq: f64, nyquist: f64, fs: f64 },

    #[error("designed filter is unstable (max pole magnitude {max_pole})")]
    UnstableFilter { max_pole: f64 },

    #[error("signal too short: {len} samples, need more than {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no EOG channels found among {0:?}")]
    NoEogChannels(Vec<String>),

    #[error("rank-deficient data: component {component} has near-zero variance ({eigenvalue:.3e})")]
    RankDeficient { component: usize, eigenvalue: f64 },

    #[error("class {0:?} has zero epochs")]
    EmptyClass(crate::signal::Class),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension underflow at {node}: kernel {kernel:?} larger than extent {extent:?}")]
    DimensionUnderflow {
        node: String,
        kernel: (usize, usize),
        extent: (usize, usize),
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("single-class input: need at least 2 distinct classes")]
    SingleClass,

    #[error("missing condition {0:?} in labeled data")]
    MissingCondition(crate::signal::Class),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad
    /// inputs or configuration). The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnstableFilter { .. } | Error::Diverged { .. } | Error::RankDeficient { .. }
        )
    }
}
