use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("stream durations differ ({0} ps vs {1} ps)")]
    DurationMismatch(u64, u64),

    #[error("calibration has no feasible solution: {reason} (residual {residual:e})")]
    Infeasible { reason: String, residual: f64 },

    #[error("fit did not converge after {iterations} iterations (chi2 {chi2:e})")]
    NonConvergence { iterations: usize, chi2: f64 },

    #[error("singular normal equations in fit")]
    Singular,

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge (estimated error {0:e})")]
    Quadrature(f64),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("bad tag file magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported tag file version {0}")]
    BadVersion(u16),

    #[error("truncated tag file: header declares {declared} records, file holds {actual}")]
    Truncated { declared: u64, actual: u64 },

    #[error("tag file record {index} is out of order or outside the duration")]
    Unsorted { index: u64 },

    #[error("tag file record {index} is malformed: {reason}")]
    BadRecord { index: u64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
