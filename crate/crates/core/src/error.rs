use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module.
///
/// Variants split into two families: input validation (bad shapes, bad
/// parameters) and numerical refusals (singularity, divergence, failed
/// certificates). [`Error::is_numerical`] tells them apart so front ends can
/// map them to distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("aliasing: {nodes} nodes cannot carry bandwidth {bandwidth} (need at least {})", 2 * bandwidth + 1)]
    Aliasing { nodes: usize, bandwidth: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("symbol value is not finite at k = {k}")]
    Overflow { k: i64 },

    #[error("singular mode k = {k}: lambda + k^(2m) b is not invertible")]
    SingularMode { k: i64 },

    #[error("near-singular system: condition estimate {condition:.3e} exceeds {threshold:.1e}")]
    NearSingular { condition: f64, threshold: f64 },

    #[error("not uniformly elliptic: Re b(x) = {value} at x = {x}")]
    NotUniformlyElliptic { x: f64, value: f64 },

    #[error("not normally elliptic at x = {x}, lambda = {lambda_re}{lambda_im:+}i: {reason}")]
    NotNormallyElliptic {
        x: f64,
        lambda_re: f64,
        lambda_im: f64,
        reason: String,
    },

    #[error("{what} diverges: estimate {estimate:.4} >= 1")]
    Divergence { what: String, estimate: f64 },

    #[error("threshold ladder exhausted at lambda = {lambda:.3e} with estimate {estimate:.4}")]
    LadderExhausted { lambda: f64, estimate: f64 },

    #[error("trace index {index} is an integer; the trace space is undefined there")]
    IntegerTraceIndex { index: f64 },

    #[error("quadrature failure on interval {interval}: local error {error:.3e}")]
    Quadrature { interval: usize, error: f64 },
}

impl Error {
    /// True for refusals raised by the numerics, false for input validation.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Aliasing { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidArgument(_)
                | Error::IntegerTraceIndex { .. }
        )
    }

    /// Short machine-readable tag used in structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Aliasing { .. } => "aliasing",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Overflow { .. } => "overflow",
            Error::SingularMode { .. } => "singular_mode",
            Error::NearSingular { .. } => "near_singular",
            Error::NotUniformlyElliptic { .. } => "not_uniformly_elliptic",
            Error::NotNormallyElliptic { .. } => "not_normally_elliptic",
            Error::Divergence { .. } => "divergence",
            Error::LadderExhausted { .. } => "ladder_exhausted",
            Error::IntegerTraceIndex { .. } => "integer_trace_index",
            Error::Quadrature { .. } => "quadrature",
        }
    }
}
