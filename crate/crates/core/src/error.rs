use thiserror::Error;

use crate::discretize::GridField;

pub type Result<T, E = HessolveError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HessolveError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("eigenvalue tuple {lambda:?} lies outside the cone Gamma_{k}")]
    NotInCone { lambda: Vec<f64>, k: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid node index {index}: {reason}")]
    InvalidIndex { index: usize, reason: String },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
        best: Option<Box<GridField>>,
    },

    #[error("line search stalled at iteration {iteration} (damping below 2^-20, residual {residual:.3e})")]
    LineSearchStalled {
        iteration: usize,
        residual: f64,
        history: Vec<f64>,
        best: Option<Box<GridField>>,
    },

    #[error(
        "subsolution construction failed at A = {a}: {reason} (node {node}, lambda {lambda:?})"
    )]
    SubsolutionFailed {
        a: f64,
        node: usize,
        lambda: Vec<f64>,
        reason: String,
    },

    #[error("solve at eps = {eps:.6e} failed: {source}")]
    AtEpsilon {
        eps: f64,
        #[source]
        source: Box<HessolveError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HessolveError {
    /// Strips `AtEpsilon` wrappers.
    pub fn root(&self) -> &HessolveError {
        match self {
            HessolveError::AtEpsilon { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self.root(),
            HessolveError::NonConvergence { .. } | HessolveError::LineSearchStalled { .. }
        )
    }
}
