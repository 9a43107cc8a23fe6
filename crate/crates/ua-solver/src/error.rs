use thiserror::Error;

/// Errors produced by decomposition, map evaluation, and time integration.
#[derive(Debug, Error)]
pub enum UaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scale vector: {0}")]
    InvalidScales(String),

    #[error("field evaluation returned a non-finite value at phases {phases:?}, x = {x:?}")]
    Evaluation { phases: Vec<f64>, x: Vec<f64> },

    /// A fixed-point loop hit its iteration cap. Carries the residual history
    /// so the caller can see whether the iteration was diverging (the
    /// contraction condition on eps_k is violated) or just slow.
    #[error("{context}: no convergence after {iters} iterations (last residual {last:e})",
            last = residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        context: String,
        iters: usize,
        residuals: Vec<f64>,
    },

    #[error("step {step} (t = {time}) failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<UaError>,
    },

    #[error("decomposition failed self-check: {0}")]
    Validation(String),

    #[error("requested range not covered: {0}")]
    Range(String),

    #[error("reference step {step:e} is too coarse for the finest period {period:e} (need <= {max_step:e})")]
    ReferenceStepTooCoarse { step: f64, period: f64, max_step: f64 },

    #[error("reference run infeasible: about {steps:.2e} steps needed, limit is {limit:.1e}")]
    InfeasibleReference { steps: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, UaError>;
