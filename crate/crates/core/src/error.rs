use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("matrix is not symplectic (deviation {deviation:.3e})")]
    InvalidMatrix { deviation: f64 },

    #[error("unphysical state: {0}")]
    UnphysicalState(String),

    #[error("invalid time {0}: must be finite and non-negative")]
    InvalidTime(f64),

    #[error("invalid integration step {0}: must be positive")]
    InvalidStep(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The purity term of the QFI diverges: pure state with a non-vanishing
    /// first-order change of the determinant.
    #[error("purity term is singular: mu = {mu}, Tr[inv(cov) d_cov] = {trace:.3e}")]
    SingularPurity { mu: f64, trace: f64 },

    #[error("no information: QFI must be positive, got {0}")]
    NoInformation(f64),

    #[error("Fock truncation too small: dim {dim} leaves tail population {tail:.3e}")]
    TruncationTooSmall { dim: usize, tail: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
