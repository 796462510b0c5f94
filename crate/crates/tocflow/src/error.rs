use thiserror::Error;

/// Errors raised by the numerical substrate.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
}

/// Errors raised while evaluating or unrolling velocity fields.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("lookahead diverged at sub-step {step} (t = {t})")]
    LookaheadDiverged { step: usize, t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors raised by constraint construction or evaluation.
#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("grid too small: need n >= 3, got {0}")]
    GridTooSmall(usize),
    #[error("index {index} out of bounds for dimension {dim}")]
    IndexOutOfBounds { index: usize, dim: usize },
}

/// Errors raised by the sampling loop.
#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sample diverged at step {step} (|x| > {threshold:e})")]
    Diverged { step: usize, threshold: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Errors raised by the flow-matching trainer.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iter} (loss = {loss})")]
    Diverged { iter: usize, loss: f64 },
}

/// Errors raised by dataset generators and experiment drivers.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("kernel matrix is not positive semi-definite after jitter")]
    KernelNotPsd,
    #[error("covariance fit failed: {0}")]
    FitFailed(String),
    #[error("{task}: {source}")]
    Task {
        task: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
