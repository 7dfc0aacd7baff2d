use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: expected 2 or 3")]
    Dimension(usize),

    #[error("invalid resolution {0}: each axis needs a power of two in [8, 4096]")]
    Resolution(usize),

    #[error("resolution has {got} axes but the grid dimension is {expected}")]
    AxisCount { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite sample in field")]
    NonFinite,

    #[error("right-hand side has mean {mean:e}, above the tolerance {tol:e}")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("invalid flow: {0}")]
    Flow(String),

    #[error("direction must have unit length (|e| = {0})")]
    Direction(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        /// Best iterate reached before giving up, when one is available.
        best: Option<Vec<f64>>,
    },

    #[error("eigenfunction changes sign (min/max = {ratio:e}); not the principal pair")]
    NotPrincipal { ratio: f64 },

    #[error("bracketing failed: objective still decreasing at lambda = {lambda_hi}")]
    Bracket { lambda_hi: f64 },

    #[error("amplitude {amplitude}: {source}")]
    AtAmplitude {
        amplitude: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation unstable at step {step} (max T = {max})")]
    Unstable { step: usize, max: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn at_amplitude(self, amplitude: f64) -> Error {
        Error::AtAmplitude {
            amplitude,
            source: Box::new(self),
        }
    }
}
