use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix in {context} is not Hermitian (defect {defect:.3e})")]
    NotHermitian { context: &'static str, defect: f64 },
    #[error("matrix in {context} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { context: &'static str, min_eig: f64 },
    #[error("basis relation block ({i},{j}) has singular value {sigma_max:.12} > 1")]
    GramDefect { i: usize, j: usize, sigma_max: f64 },
    #[error("quadrature did not converge in {context}: estimated error {estimate:.3e}")]
    Quadrature { context: &'static str, estimate: f64 },
    #[error("inconsistent expectations for signal {signal}: {reason}")]
    InconsistentExpectations { signal: usize, reason: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("conic solver returned status {status} ({detail})")]
    Conic { status: String, detail: String },
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("dual certificate rejected: residual min eigenvalue {residual:.3e}")]
    CertificateRejected { residual: f64 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed data at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
