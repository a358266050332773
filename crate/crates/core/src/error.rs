use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Phi4Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("test function support does not fit the torus: {0}")]
    Support(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: u64, detail: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("snapshot format: {0}")]
    Snapshot(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Phi4Error>;

impl From<std::io::Error> for Phi4Error {
    fn from(e: std::io::Error) -> Self {
        Phi4Error::Io(e.to_string())
    }
}
