use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{context}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },

    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error(
        "{context}: matrix is singular to working precision (condition estimate {condition:.3e})"
    )]
    Singular {
        context: &'static str,
        condition: f64,
    },

    #[error("{context}: rank {available} is insufficient, {required} directions requested")]
    RankDeficient {
        context: &'static str,
        required: usize,
        available: usize,
    },

    #[error("reduced basis of dimension {r} is outside S_G: condition of V^T (J-R)^-1 V is {condition:.3e}{}",
        state_norm.map(|n| format!(" at reduced state norm {n:.3e}")).unwrap_or_default())]
    NotInSg {
        r: usize,
        condition: f64,
        state_norm: Option<f64>,
    },

    #[error("invalid port-Hamiltonian structure: {0}")]
    InvalidStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
