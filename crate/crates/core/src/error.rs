use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("singular matrix (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("outside series domain: {0}")]
    DomainError(String),

    #[error("matrix is not skew-symmetric (|V + V^T|_F = {residual:e})")]
    NotSkew { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("moments of inertia must be positive, got {0:?}")]
    InvalidInertia([f64; 3]),

    #[error("initial carrier must have unit length, got |y0| = {0}")]
    InvalidInitial(f64),

    #[error("{steps} steps are not divisible by coarsening factor {factor}")]
    IndivisibleSteps { steps: usize, factor: usize },

    #[error("step size must be positive, got {0}")]
    ZeroStepSize(f64),

    #[error(
        "truncation index q = {q} violates q >= 2*gamma - 2 for strong order {gamma}; \
         pass --allow-underresolved to run anyway"
    )]
    Underresolved { q: usize, gamma: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("need at least {needed} finite samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed noise table: {0}")]
    MalformedTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics of a run rather than its inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularMatrix { .. } | Error::NonFiniteState { .. } | Error::DomainError(_) => true,
            Error::StepFailure { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
