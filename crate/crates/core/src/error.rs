use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {requested} qubits requested, limit is {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("observable is not Hermitian (imaginary residue {residue:e})")]
    NotHermitian { residue: f64 },

    #[error("design matrix is ill-conditioned (condition estimate {condition:e})")]
    Conditioning { condition: f64 },

    #[error("non-finite value in parameter block `{block}`")]
    NonFinite { block: String },

    #[error("training diverged at epoch {epoch}; last finite epoch {last_finite:?}")]
    Divergence {
        epoch: usize,
        last_finite: Option<usize>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
