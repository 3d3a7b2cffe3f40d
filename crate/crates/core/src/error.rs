use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unknown coefficient spec `{0}`")]
    UnknownSpec(String),
    #[error("malformed spec `{input}`: {reason}")]
    MalformedSpec { input: String, reason: String },
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("diffusion coefficient is not elliptic (min face value {0})")]
    NotElliptic(f64),
    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("weight field must be strictly positive (min {0})")]
    NotPositiveWeight(f64),
    #[error("degenerate spectral gap ({0:e})")]
    DegenerateGap(f64),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("solution blew up at t = {t} (sup {sup:e})")]
    BlowUp { t: f64, sup: f64 },
    #[error("reference state must be strictly positive (min {0})")]
    NotPositiveReference(f64),
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("reference is not stationary (residual {residual:e} > {tol:e})")]
    NotStationaryReference { residual: f64, tol: f64 },
    #[error("reference field has zero norm")]
    ZeroReference,
    #[error("unsupported selection exponent p = {0} (expected 1 or 2)")]
    UnsupportedExponent(f64),
    #[error("no positive steady state: lambda1 = {0} >= 0")]
    NoPositiveSteadyState(f64),
    #[error(
        "continuation stalled at s = {s} after {iterations} iterations (residual {residual:e})"
    )]
    ContinuationStall {
        s: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{context}: {source}")]
    Scenario {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(input: &str, reason: impl Into<String>) -> Self {
        Error::MalformedSpec {
            input: input.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_scenario(self, context: impl Into<String>) -> Self {
        Error::Scenario {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
