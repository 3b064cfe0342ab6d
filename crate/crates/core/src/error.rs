use thiserror::Error;

use crate::harness::Validation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only n = 2 and n = 3 are implemented")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite integrand sample at {location}")]
    NonFiniteSample { location: String },

    #[error("kernel `{label}` is not mean-zero (mean {mean:.3e}); project it first")]
    KernelNotMeanZero { label: String, mean: f64 },

    #[error("field `{0}` has no compact support")]
    UnknownSupport(String),

    #[error("ball mass {mass:e} is numerically vacuous")]
    VacuousBall { mass: f64 },

    #[error("no mass data for radius {radius:e} around the requested center")]
    MissingMassData { radius: f64 },

    #[error("no ball of the family contains the evaluation point")]
    NoBallContainsPoint,

    #[error("truncation grid spans {octaves} octaves; at least 2 are required")]
    GridTooCoarse { octaves: i32 },

    #[error("exponent formula for {quantity} divides by zero")]
    SingularExponent { quantity: &'static str },

    #[error("unknown experiment id `{0}`")]
    UnknownExperiment(String),

    #[error("hypotheses rejected for `{}`", .0.theorem)]
    HypothesesRejected(Box<Validation>),

    #[error("every evaluation point was excluded (rhs below threshold)")]
    AllPointsExcluded,

    #[error("estimated cost {estimated:e} exceeds the configured cap {cap:e}")]
    BudgetExceeded { estimated: f64, cap: f64 },

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
