//! Error type shared by every solver layer.
//!
//! Step operators do not know the absolute simulation time, so they raise
//! time-stamped variants with `t = NaN`; the driver fills the actual time in
//! via [`Error::at_time`] before surfacing the error.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A node array handed to a constructor was not strictly increasing.
    #[error(
        "node positions must be strictly increasing: node {index} = {value:e} \
         does not exceed its predecessor {previous:e}"
    )]
    NonMonotone {
        index: usize,
        value: f64,
        previous: f64,
    },

    /// A transport step produced a non-monotone node arrangement. The caller
    /// should retry with a smaller time increment.
    #[error("transport step lost monotonicity near node {index} at t = {t}; dt too large")]
    NonMonotoneResult { t: f64, index: usize },

    /// The Newton iteration of the implicit transport stage diverged. For the
    /// aggregation models this is the numerical signature of finite-time
    /// blow-up of the cell density.
    #[error(
        "Newton iteration diverged at t = {t} after {iterations} iterations \
         (residual {residual:e}); interpreting as density blow-up"
    )]
    BlowupDetected {
        t: f64,
        iterations: u32,
        residual: f64,
    },

    /// A reaction stage drove a cell average to zero or below.
    #[error("cell density became non-positive at t = {t} (cell {cell}, value {value:e})")]
    NonPositiveDensity { t: f64, cell: usize, value: f64 },

    /// Total mass reached zero or below; the inverse distribution is undefined.
    #[error("total mass must be positive, got {mass:e}")]
    ZeroMass { mass: f64 },

    /// The adaptive controller could not find an admissible time increment.
    #[error("time increment {dt:e} fell below the floor {floor:e} at t = {t}")]
    TimeStepUnderflow { t: f64, dt: f64, floor: f64 },

    /// Two node positions coincide where distinct points are required
    /// (log-kernel convolution sums).
    #[error("coincident node positions at indices {i} and {j}")]
    CoincidentNodes { i: usize, j: usize },

    /// A linear solve hit a vanishing pivot.
    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },

    /// A computed quantity was NaN or infinite.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// The uniform-grid reference scheme lost stability.
    #[error("finite-difference run became unstable at t = {t}: {reason}")]
    InstabilityDetected { t: f64, reason: String },

    /// Array sizes do not satisfy an operation's coupling rule.
    #[error("resolution mismatch in {context}: expected {expected}, got {got}")]
    ResolutionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An error norm fed to the EOC computation was not positive.
    #[error("convergence orders need positive errors; entry {index} is {value:e}")]
    NonPositiveError { index: usize, value: f64 },

    /// A model failed validation; one message per problem.
    #[error("invalid model: {}", problems.join("; "))]
    InvalidModel { problems: Vec<String> },

    /// Syntax or content error in a text format (config file, CSV).
    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    /// Requested operation is outside the supported model class.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Fill the simulation time into a time-stamped variant raised by a step
    /// operator (which only knows relative time). Leaves other variants, and
    /// already-stamped times, untouched.
    pub(crate) fn at_time(mut self, time: f64) -> Self {
        match &mut self {
            Error::NonMonotoneResult { t, .. }
            | Error::BlowupDetected { t, .. }
            | Error::NonPositiveDensity { t, .. }
            | Error::TimeStepUnderflow { t, .. }
            | Error::InstabilityDetected { t, .. } => {
                if t.is_nan() {
                    *t = time;
                }
            }
            _ => {}
        }
        self
    }

    /// Whether a failed step may succeed again with a smaller increment.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::NonMonotoneResult { .. } | Error::NonPositiveDensity { .. }
        )
    }
}
