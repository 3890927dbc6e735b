use thiserror::Error;

/// Errors reported by the geometry, network, training, and integration layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A chart coordinate left the ball on which the exponential chart is a
    /// diffeomorphism (norm must stay strictly below `pi` minus a margin).
    #[error("chart coordinate norm {norm:.6e} outside exponential chart domain (|x| < {limit:.6e})")]
    ChartViolation { norm: f64, limit: f64 },

    /// A configuration value failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Mismatched dimensions between a network and data fed to it.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A batch operation received no points, or every point was rejected.
    #[error("empty batch: {0}")]
    EmptyBatch(String),

    /// The damped Newton solve for the implicit step did not reach tolerance.
    #[error("Newton solve did not converge: residual {residual:.6e} after {iterations} iterations")]
    NewtonDidNotConverge { iterations: usize, residual: f64 },

    /// The finite-difference Jacobian in the Newton solve was numerically singular.
    #[error("singular Jacobian in Newton solve (residual {residual:.6e})")]
    SingularJacobian { residual: f64 },

    /// A rollout aborted partway because one step failed.
    #[error("rollout aborted at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// A weight file or config file could not be interpreted.
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
