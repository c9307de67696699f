use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("planar grid has no bounding box")]
    MissingBoundingBox,

    #[error("singular matrix (pivot {pivot:e} below threshold)")]
    SingularMatrix { pivot: f64 },

    #[error("estimator not applicable: {0}")]
    NotApplicable(String),

    #[error("observation has zero likelihood under every secret: {0}")]
    ImpossibleObservation(String),

    #[error("linear program {0}")]
    Lp(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("all components are non-positive, cannot normalize")]
    NonPositive,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
