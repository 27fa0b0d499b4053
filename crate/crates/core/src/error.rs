use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("Gramian is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("RLS normalization 1 + h^T z is not real (imaginary part {imag:e})")]
    NonRealAlpha { imag: f64 },
    #[error("cannot split {m} antennas into {c} equal clusters")]
    Partition { m: usize, c: usize },
    #[error("user count mismatch: chain has K = {expected}, got K = {got}")]
    UserCountMismatch { expected: usize, got: usize },
    #[error("frame has no uplink symbols (N_UL = 0); RLS rate is undefined")]
    NoUplink,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
