//! Crate-wide error type.

use thiserror::Error;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate region id `{0}`")]
    DuplicateRegion(String),

    #[error("empty region id at row {row}")]
    EmptyRegionId { row: usize },

    #[error("bad coordinate at row {row}: {detail}")]
    BadCoordinate { row: usize, detail: String },

    #[error("empty input `{0}`")]
    EmptyInput(String),

    #[error("region `{0}` has zero total cases")]
    ZeroDenominator(String),

    #[error("count exceeds total for region `{region}`, chapter `{chapter}`")]
    CountExceedsTotal { region: String, chapter: String },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),

    #[error("k = {k} must be smaller than the number of regions n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("nsim = {0} is below the minimum of 99 simulations")]
    TooFewSimulations(usize),

    #[error("column name clash: `{0}`")]
    NameClash(String),

    #[error("design matrix is rank deficient (columns {0:?})")]
    RankDeficient(Vec<String>),

    #[error("spatial filter I - rho*W is singular at rho = {0}")]
    SingularFilter(f64),

    #[error("rho estimate {0} hit the search-interval boundary")]
    BoundaryRho(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid lattice shape: {0}")]
    BadShape(String),

    #[error("region `{0}` has no polygon geometry")]
    NoGeometry(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("parse error in {path} at row {row}: {detail}")]
    Parse {
        path: String,
        row: usize,
        detail: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
