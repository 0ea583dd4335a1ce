use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("insufficient kernel data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),
    #[error("degenerate mode: {0}")]
    DegenerateMode(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("eigen solver did not converge: {0}")]
    NoConvergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("no admissible Lyapunov coefficients: {0}")]
    NoAdmissibleCoefficients(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
