use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max |A_ij - A_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("probability {prob} at entry ({i}, {j}) is outside [0, 1]")]
    ProbabilityOutOfRange { i: usize, j: usize, prob: f64 },

    #[error("indefinite top spectrum: retained eigenvalue {index} is {value:e}")]
    IndefiniteSpectrum { index: usize, value: f64 },

    #[error("rank-deficient cross-product in alignment (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("weight `{weight}` undefined at j = {j} (s = {s}, t = {t})")]
    WeightDomain {
        weight: String,
        j: usize,
        s: f64,
        t: f64,
    },

    #[error("singular matrix in {context} (condition estimate {condition:e})")]
    Singular { context: &'static str, condition: f64 },

    #[error("{context} failed to converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("criterion undefined at the initial point of row {row}")]
    UndefinedStart { row: usize },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_row(self, row: usize) -> Self {
        match self {
            Error::Row { .. } => self,
            other => Error::Row {
                row,
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
