use thiserror::Error;

use crate::sdp::SdpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {min:.3e}, largest {max:.3e})")]
    NotPsd { min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("no power or interference constraint enabled; the problem is unbounded")]
    NoConstraints,

    #[error("constraints do not bound the beamformer power; the problem is unbounded")]
    Unbounded,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undetectable user: effective channel gain {0:.3e}")]
    Undetectable(f64),

    #[error("SDP solver stopped with status {0:?}")]
    Solver(SdpStatus),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("too many failed trials: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
