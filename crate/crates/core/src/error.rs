use thiserror::Error;

/// Errors produced by path sampling, integration and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("coarsening factor {factor} does not divide the step count {steps}")]
    CoarsenFactor { factor: usize, steps: usize },

    #[error("unknown tableau `{0}`")]
    UnknownTableau(String),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("stage solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system in implicit step")]
    SingularMatrix,

    #[error("system `{0}` provides no Hessian")]
    MissingHessian(String),

    #[error("system `{0}` provides no linear form")]
    MissingLinearForm(String),

    #[error("system `{0}` has no exact solution")]
    MissingExactSolution(String),

    #[error("noise dimension mismatch: system expects {system}, path has {path}")]
    NoiseDimension { system: usize, path: usize },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips any step-index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self.root(), Error::NonConvergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
