use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid convex set: {0}")]
    InvalidSet(String),

    #[error("shrunken set has empty interior (margin {margin})")]
    EmptyInterior { margin: f64 },

    #[error("obstacle set at step {step}, node {node} has radius {radius} beyond uniform bound {bound}")]
    UniformBoundViolated {
        step: usize,
        node: usize,
        radius: f64,
        bound: f64,
    },

    #[error("separation witness misses the shrunken obstacle at step {step}, node {node} (margin {margin})")]
    MarginViolated { step: usize, node: usize, margin: f64 },

    #[error("coefficient fails the ellipticity probe at t={time}, node {node}")]
    EllipticityViolated { time: f64, node: usize },

    #[error("linear solver stopped after {iterations} iterations with residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("nonlinear step iteration did not converge at time step {step} (residual {residual:e})")]
    PicardDiverged { step: usize, residual: f64 },

    #[error("penalization ladder is not converging: {0}")]
    NotConverging(String),

    #[error("test function leaves the obstacle at step {step}, node {node} (distance {distance:e})")]
    TestFunctionInfeasible {
        step: usize,
        node: usize,
        distance: f64,
    },

    #[error("driver produced a non-finite value at t={time}, node {node}")]
    NonFinite { time: f64, node: usize },

    #[error("Monte Carlo standard error {standard_error:e} exceeds 10% of value scale {scale:e}")]
    InsufficientPaths { standard_error: f64, scale: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Attaches the scenario name, unless one is already attached.
    pub fn in_scenario(self, scenario: &str) -> Self {
        match self {
            e @ Error::Scenario { .. } => e,
            e => Error::Scenario {
                scenario: scenario.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with scenario context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            e => e,
        }
    }
}
