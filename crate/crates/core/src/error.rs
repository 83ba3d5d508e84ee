use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("design matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyDesign { rows: usize, cols: usize },

    #[error("design matrix contains a non-finite value at row {row}, column {col}")]
    NonFiniteDesign { row: usize, col: usize },

    #[error("length mismatch: {what} (expected {expected}, got {actual})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },

    #[error("perfect fit: residual sum of squares {rss:e} is negligible, likelihood is unbounded")]
    PerfectFit { rss: f64 },

    #[error("observation {index} has leverage 1, Cook's distance is undefined")]
    LeverageOne { index: usize },

    #[error("AICc small-sample correction undefined for n = {n}, k = {k} (need n - k - 1 >= 1)")]
    SmallSample { n: usize, k: usize },

    #[error("density {density} at the outcome is not positive, ignorance is undefined")]
    ZeroDensity { density: f64 },

    #[error("leave-one-out fold {fold} is a perfect fit")]
    FoldPerfectFit { fold: usize },

    #[error("leave-one-out fold {fold} is rank deficient")]
    FoldRankDeficient { fold: usize },

    #[error("too few rows for leave-one-out scoring: {rows} rows, need at least {needed}")]
    TooFewRows { rows: usize, needed: usize },

    #[error("count {value} in year {year} is not positive")]
    NonPositiveCount { year: i64, value: f64 },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("covariate `{name}` has {actual} values, dataset has {expected} years")]
    AlignmentError {
        name: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("no derangement exists for n = {0} (need n >= 2)")]
    NoDerangement(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid experiment configuration: {0}")]
    ConfigError(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidModel(_) | InvalidArgument(_) | ConfigError(_) | UnknownCovariate(_) => {
                ErrorClass::Config
            }
            EmptyDesign { .. }
            | NonFiniteDesign { .. }
            | LengthMismatch { .. }
            | NonPositiveCount { .. }
            | AlignmentError { .. }
            | InvalidDataset(_)
            | TooFewRows { .. }
            | NoDerangement(_) => ErrorClass::Data,
            RankDeficient { .. }
            | PerfectFit { .. }
            | LeverageOne { .. }
            | SmallSample { .. }
            | ZeroDensity { .. }
            | FoldPerfectFit { .. }
            | FoldRankDeficient { .. } => ErrorClass::Numerical,
        }
    }
}
