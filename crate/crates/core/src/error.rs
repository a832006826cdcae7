use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("quotient graph is not strongly connected")]
    QuotientNotStronglyConnected,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Weights outside the admissible set (nonpositive or violating the
    /// balance constraint of the quotient graph).
    #[error("inadmissible weights: {0}")]
    Inadmissible(String),

    #[error("matrix is not Hurwitz (max real part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
