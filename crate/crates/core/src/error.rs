use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants carry the offending index or value where one exists, so a bad
/// event can be located in the input file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} for `{name}` is outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("observable {index} value {value} is out of range")]
    OutOfRange { index: usize, value: f64 },
    #[error("row has {got} entries, dataset has {expected} observables")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("observable is not part of this dataset")]
    UnknownObservable,
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("variable `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid variable definition: {0}")]
    InvalidVariable(String),

    #[error("non-finite density at event {0}")]
    NonFiniteDensity(usize),
    #[error("negative density at event {0}")]
    NegativeDensity(usize),
    #[error("normalization is not positive: {0}")]
    NonPositiveNorm(f64),
    #[error("observable `{0}` has an infinite range and no analytic normalization")]
    UnboundedObservable(String),
    #[error("fraction parameters are outside the simplex")]
    FractionOutOfRange,
    #[error("product components share observables")]
    OverlappingObservables,
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("integration grid needs at least 32 nodes per axis, got {0}")]
    DegenerateGrid(usize),

    #[error("density is not positive at event {0}")]
    NonPositiveDensity(usize),
    #[error("expected bin content is not positive in bin {0}")]
    NonPositiveExpectation(usize),
    #[error("dataset is empty")]
    EmptyDataSet,
    #[error("invalid backend: {0}")]
    InvalidBackend(String),

    #[error("call limit of {0} objective evaluations exceeded")]
    MaxCallsExceeded(u64),
    #[error("quasi-Newton Hessian approximation became singular")]
    SingularHessianApprox,
    #[error("objective is not finite: {0}")]
    NonFiniteObjective(f64),
    #[error("Hessian is not positive definite (eigenvalues {eigenvalues:?})")]
    NonPositiveDefinite { eigenvalues: Vec<f64> },
    #[error("no free parameters")]
    NoFreeParameters,

    #[error("density exceeded the accept-reject envelope")]
    EnvelopeExceeded,
    #[error("gave up after {0} attempts")]
    AttemptsExhausted(u64),

    #[error("shard {0} is missing")]
    MissingShard(usize),
    #[error("shard {0} reported twice")]
    DuplicateShard(usize),
    #[error("wire protocol: {0}")]
    Protocol(String),

    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Errors that describe a point outside the model's valid domain rather
    /// than a programming or I/O fault. The minimizer backs off from these.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteDensity(_)
                | Error::NegativeDensity(_)
                | Error::NonPositiveNorm(_)
                | Error::NonPositiveDensity(_)
                | Error::NonPositiveExpectation(_)
                | Error::NonFiniteObjective(_)
                | Error::OutOfBounds { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
