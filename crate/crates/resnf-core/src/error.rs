use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: ({},{}) vs ({},{})", left.0, left.1, right.0, right.1)]
    DimMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("generator has terms at ε-order 0; Lie series does not terminate")]
    NonPerturbativeGenerator,

    #[error("small divisor {divisor:.3e} at monomial {monomial}")]
    SmallDivisor { monomial: String, divisor: f64 },

    #[error("Melnikov condition failed: min divisor {min_divisor:.3e} at k1 = {k1}")]
    MelnikovFailure { min_divisor: f64, k1: i32 },

    #[error("twist condition failed: action Hessian degenerate (constant {constant:.3e})")]
    TwistFailure { constant: f64 },

    #[error("resonance mismatch: {0}")]
    ResonanceMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("chart override is not unimodular (det = {0})")]
    NonUnimodularChart(f64),

    #[error("block leakage in linearization: off-diagonal norm {0:.3e}")]
    BlockLeakage(f64),

    #[error("flow integration failed: {0}")]
    IntegrationFailure(String),

    #[error("Newton iteration failed to converge: residual {residual:.3e} after {iters} steps")]
    NewtonDivergence { residual: f64, iters: usize },

    #[error("theorem hypothesis failed: {0}")]
    HypothesisFailure(String),

    #[error("invalid scaling samples: {0}")]
    InvalidSamples(String),
}
