use thiserror::Error;

/// Errors produced by the model-reduction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD failed to converge for a {rows}x{cols} matrix after {sweeps} sweeps")]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        sweeps: usize,
    },
    #[error("matrix construction: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Newton failed at step {step}: residual norm {residual_norm:.3e} after {iterations} iterations")]
    NewtonDiverged {
        step: usize,
        residual_norm: f64,
        iterations: usize,
    },
    #[error("window {window}: {source}")]
    Window { window: usize, source: Box<Error> },
    #[error("Gauss-Newton least-squares system is rank deficient in window {window}")]
    RankDeficient { window: usize },
    #[error("solver did not converge in window {window} after {iterations} iterations (residual {residual_norm:.3e})")]
    SolveDiverged {
        window: usize,
        iterations: usize,
        residual_norm: f64,
    },
    #[error("empty or degenerate training data: {0}")]
    DegenerateData(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sample mesh infeasible: {0}")]
    InfeasibleMesh(String),
    #[error("training solve failed for parameter ({mu1}, {mu2}) in window {window}: {source}")]
    TrainingSolve {
        mu1: f64,
        mu2: f64,
        window: usize,
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
