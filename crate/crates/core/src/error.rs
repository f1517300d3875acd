use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error(
        "under-resolved grid: spacing {spacing:.3e} exceeds eps/4 = {limit:.3e}; \
         use at least G = {required_points} points per axis"
    )]
    UnderResolved {
        spacing: f64,
        limit: f64,
        required_points: usize,
    },

    #[error("time step {dt} too large: max rate * dt = {product:.3} exceeds 0.1")]
    StepTooLarge { dt: f64, product: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("solver produced a non-finite value at t = {time}")]
    Unstable { time: f64 },

    #[error("genealogy depth exceeds {max} generations")]
    LabelOverflow { max: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
