use alloc::string::String;
use thiserror::Error;

/// Failures surfaced by the numerical layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("kernel moment diverged: {0}")]
    KernelMomentDivergence(String),
    #[error("integration failure in {coefficient}: {detail}")]
    Integration { coefficient: String, detail: String },
    #[error("model support error: {0}")]
    ModelSupport(String),
    #[error("exact-sum form unavailable for N = {0}")]
    ExactFormUnavailable(usize),
    #[error("unstable optimum: Hessian minimum eigenvalue {min_eig:e}")]
    UnstableOptimum { min_eig: f64 },
    #[error("negative bandwidth in block {index}: {value:e}")]
    NegativeBandwidth { index: usize, value: f64 },
    #[error("degenerate block {0}: zero sample variance")]
    DegenerateBlock(usize),
    #[error("quantile not bracketable for p = {0}")]
    NonBracketable(f64),
    #[error("outside transform domain: {0}")]
    Domain(String),
}

impl Error {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Config(_) => "configuration",
            Error::KernelMomentDivergence(_) => "kernel-moment-divergence",
            Error::Integration { .. } => "integration-failure",
            Error::ModelSupport(_) => "model-support",
            Error::ExactFormUnavailable(_) => "exact-form-unavailable",
            Error::UnstableOptimum { .. } => "unstable-optimum",
            Error::NegativeBandwidth { .. } => "negative-bandwidth",
            Error::DegenerateBlock(_) => "degenerate-block",
            Error::NonBracketable(_) => "non-bracketable",
            Error::Domain(_) => "domain",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "check the input values against the documented preconditions",
            Error::Config(_) => "check names and parameter values in the configuration",
            Error::KernelMomentDivergence(_) => "use a kernel with finite first and second moments",
            Error::Integration { .. } => "raise q or the quadrature budget, or check the model near its upper endpoint",
            Error::ModelSupport(_) => "the density vanishes inside the tail; lower q or change the model",
            Error::ExactFormUnavailable(_) => "use the large-n evaluation mode",
            Error::UnstableOptimum { .. } => "reduce the number of blocks or enlarge blocks; consider a transform",
            Error::NegativeBandwidth { .. } => "the quadratic model has no interior optimum; consider a transform",
            Error::DegenerateBlock(_) => "remove constant blocks or supply bandwidths explicitly",
            Error::NonBracketable(_) => "request a probability inside the fitted range",
            Error::Domain(_) => "choose a transform whose domain contains the data",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
