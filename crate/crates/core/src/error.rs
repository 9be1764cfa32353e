//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: requested {requested:.3e}, achieved {achieved:.3e}")]
    NonConvergence { requested: f64, achieved: f64 },
    #[error("integration window search failed: {0}")]
    Window(String),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(
        "exponential fit failed: best error {best_error:.3e} with {modes} modes \
         (tolerance {tol:.3e}, cap {cap})"
    )]
    ToleranceNotMet { best_error: f64, modes: usize, tol: f64, cap: usize },
    #[error("fit input invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("index set of {count} ADOs exceeds the configured ceiling {ceiling}")]
    Capacity { count: u128, ceiling: usize },
    #[error("state/generator dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("propagation unstable at t = {t:.4}: max |element| = {max_abs:.3e} (guard {guard:.1e}); increase the depth or reduce the step")]
    Instability { t: f64, max_abs: f64, guard: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("checkpoint i/o: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("trace spans {span:.4} which is less than one driving period {period:.4}")]
    InsufficientSpan { span: f64, period: f64 },
    #[error("first-order ADO semantics are not available for this solver state: {0}")]
    NoFirstOrderAdos(String),
    #[error("hierarchy depth {depth} is insufficient (need {needed}) for this observable")]
    DepthInsufficient { depth: usize, needed: usize },
    #[error("efficiency undefined: {0}")]
    Undefined(String),
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("steady state not detected within t = {max_time:.1} (last period-to-period deviation {last_dev:.3e})")]
    Timeout { max_time: f64, last_dev: f64 },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("convergence scan exhausted the depth grid without meeting the criterion")]
    ScanNotConverged,
}
