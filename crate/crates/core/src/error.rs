use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid descriptor `{descriptor}`: {reason}")]
    Descriptor { descriptor: String, reason: String },

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {x:?} is at a node (|ψ| = {amplitude:e} below threshold {threshold:e})")]
    AtNode {
        x: Vec<f64>,
        amplitude: f64,
        threshold: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("derivative of order {requested} requested but only {available} available")]
    DerivativeOrder { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite integrand value at {0:?}")]
    NonFinite(Vec<f64>),

    #[error("sampler tuning failed: acceptance {acceptance:.3} outside [0.2, 0.8]")]
    Tuning { acceptance: f64 },

    #[error("node resolution too coarse: {0}")]
    Resolution(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("ε-exclusion sequence for {quantity} diverges (last values {tail:?})")]
    Divergence { quantity: String, tail: Vec<f64> },

    #[error("trajectory step underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable tag used in structured reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Descriptor { .. } => "descriptor",
            Error::Unknown { .. } => "unknown_name",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::AtNode { .. } => "at_node",
            Error::Unsupported(_) => "unsupported",
            Error::DerivativeOrder { .. } => "derivative_order",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Tuning { .. } => "sampler_tuning",
            Error::Resolution(_) => "resolution",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::Divergence { .. } => "eps_divergence",
            Error::StepUnderflow(_) => "step_underflow",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Errors caused by the request rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Descriptor { .. } | Error::Unknown { .. } | Error::InvalidParameter(_) | Error::Config(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
