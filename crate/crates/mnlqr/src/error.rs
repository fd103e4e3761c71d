//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input matrix is farther from symmetric than the configured tolerance.
    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds {tol:.3e}")]
    Asymmetric { asymmetry: f64, tol: f64 },

    /// A vector length is not a triangular number d(d+1)/2.
    #[error("length {0} is not of the form d(d+1)/2")]
    LengthNotTriangular(usize),

    /// Operand shapes disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Model dimensions disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Tensor mode index outside {1, 2, 3}.
    #[error("invalid tensor mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    /// A completely positive operator needs at least one mode.
    #[error("empty mode list")]
    EmptyModeList,

    /// Matrix expected to be positive semidefinite has a negative eigenvalue.
    #[error("{what} is not positive semidefinite: smallest eigenvalue {eigmin:.3e}")]
    NotPsd { what: String, eigmin: f64 },

    /// Matrix expected to be positive definite is not.
    #[error("{what} is not positive definite: smallest eigenvalue {eigmin:.3e}")]
    NotPd { what: String, eigmin: f64 },

    /// The exact operator norm is only available for operators built from modes or tensors.
    #[error("operator was not constructed as completely positive")]
    NotCpConstructed,

    /// Operation needs equal input and output dimension.
    #[error("operator is not square: maps {in_dim} to {out_dim}")]
    NotSquare { in_dim: usize, out_dim: usize },

    /// Spectral radius is not below one.
    #[error("operator is not mean-square stable: spectral radius {0:.6}")]
    Unstable(f64),

    /// The model tensor does not span the true modes.
    #[error("model is not equivalent to the true modes: {0}")]
    ModelNotEquivalent(String),

    /// Confidence level outside (0, 1).
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    /// A sample exceeds the declared norm bound.
    #[error("sample {index} has norm {norm:.6} above the bound {bound:.6}")]
    NormBoundViolated { index: usize, norm: f64, bound: f64 },

    /// Too few samples for the estimator.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// The regressors do not excite every direction.
    #[error("rank deficient data: rank {rank} below required {required}")]
    RankDeficientData { rank: usize, required: usize },

    /// Sample count is below the threshold where the sample complexity bound applies.
    #[error("sample count {n} below the threshold {threshold:.1}")]
    SampleCountBelowThreshold { n: usize, threshold: f64 },

    /// Disturbance cannot be recovered from the state at this sample.
    #[error("disturbance not observable at sample {0}")]
    NotObservable(usize),

    /// Measurement cannot be explained by the model at this sample.
    #[error("measurement {index} inconsistent with the model: residual {residual:.3e}")]
    InconsistentMeasurement { index: usize, residual: f64 },

    /// Mean estimation needs a structured model.
    #[error("model is not structured")]
    NotStructured,

    /// R + G*(P) could not be inverted.
    #[error("inner Riccati matrix R + G*(P) is singular")]
    SingularInnerMatrix,

    /// Value iteration grew without bound.
    #[error("Riccati iteration diverged after {iterations} iterations: no stabilizing controller for this second moment")]
    Diverged { iterations: usize },

    /// Value iteration hit the iteration cap.
    #[error("Riccati iteration did not converge in {max_iter} iterations (relative step {step:.3e})")]
    NotConverged { max_iter: usize, step: f64 },

    /// Upper end of the ambiguity interval is indefinite.
    #[error("upper moment W_hat + beta*I is not positive semidefinite: smallest eigenvalue {0:.3e}")]
    WBarNotPsd(f64),

    /// Closed loop is not mean-square stable, so the cost is infinite.
    #[error("closed loop is not mean-square stable: spectral radius {0:.6}")]
    UnstableClosedLoop(f64),

    /// A simulated trajectory exceeded the magnitude cap.
    #[error("trajectory blow-up: state norm {0:.3e} exceeds the cap")]
    TrajectoryBlowup(f64),

    /// Empty input where data is required.
    #[error("empty input")]
    EmptyInput,

    /// Invalid value passed as a probability or parameter.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration failed validation; the string names the field path.
    #[error("invalid configuration at {path}: {message}")]
    ConfigInvalid { path: String, message: String },

    /// Input/output failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by invalid user configuration or malformed input files.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid { .. } | Error::Io(_) | Error::InvalidArgument(_) | Error::InvalidDelta(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
