use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("decay rate {index} must be strictly positive, got {value}")]
    NonPositiveDecay { index: usize, value: f64 },

    #[error("generator is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("matrix exponential overflowed after {squarings} squarings")]
    Overflow { squarings: u32 },

    #[error(
        "eigenvalue {re} + {im}i lies on the closed negative real axis; principal logarithm undefined"
    )]
    SpectrumOnBranchCut { re: f64, im: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "Peano-Baker series did not converge within {terms} terms (last term norm {last_term:e}); subdivide the interval"
    )]
    SeriesNonConvergence { terms: usize, last_term: f64 },

    #[error("state entry {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("step size rejected: {clamps} clamping events in {evaluations} component updates")]
    StepSizeRejected { clamps: usize, evaluations: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("baseline integral is zero; amplification undefined")]
    ZeroBaseline,

    #[error("adjacency has zero spectral radius: threshold is infinite, no social persistence possible")]
    InfiniteThreshold,

    #[error("non-monotone persistence classification at tau = {tau}; refine the horizon or grid")]
    NonMonotoneSweep { tau: f64 },

    #[error("regressor is rank deficient; unidentifiable directions: {directions:?}")]
    Unidentifiable { directions: Vec<Vec<f64>> },

    #[error("cannot recover generator: {0}")]
    Aliasing(String),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
