use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate coefficients: a + b = 0")]
    DegenerateCoefficients,

    #[error("no positive β exists: -a/(a+b) = {ratio} is not > 1")]
    NoPositiveBeta { ratio: f64 },

    #[error("observable diverged at sample {index}")]
    ObservableDiverged { index: usize },

    #[error("trajectory diverged at t = {time}")]
    TrajectoryDiverged { time: f64 },

    #[error("midpoint nonconvergence after {iterations} iterations (residual {residual:e})")]
    MidpointNonconvergence { iterations: usize, residual: f64 },

    #[error("step failed at t = {time}: {source}")]
    StepFailed {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: effective sample size {ess:.1} < {required}")]
    InsufficientData { ess: f64, required: f64 },

    #[error("Wick expectation unsupported for monomial degree {0}")]
    DegreeTooHigh(u32),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
