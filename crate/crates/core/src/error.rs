use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate subsystem tag `{0}`")]
    DuplicateTag(String),

    #[error("unknown subsystem tag `{0}`")]
    UnknownTag(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("gate `{0}` is not unitary")]
    NotUnitary(String),

    #[error("post-selection branch unreachable (probability {0:.3e})")]
    UnreachableBranch(f64),

    #[error("empty counts table")]
    EmptyCounts,

    #[error("zero detector efficiency for outcome pair `{0}`")]
    ZeroEfficiency(String),

    #[error("tomography settings are rank deficient")]
    RankDeficient,

    #[error("maximum-likelihood reconstruction did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("missing fiducial setting ({0}, {1})")]
    MissingFiducial(usize, usize),

    #[error("transformation is not orthogonal")]
    NotOrthogonal,

    #[error("mismatched probability tables: {0}")]
    TableMismatch(String),

    #[error("instrument branches do not resolve the identity for setting {0}")]
    InvalidInstrument(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
