use thiserror::Error;

/// Errors raised across the lab.
///
/// Validation defects carry their own enums so callers can match on the
/// failed clause; everything else is reported with enough context to locate
/// the offending index, file line or iteration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid Markov chain: {0}")]
    Chain(#[from] crate::mdp::ChainDefect),

    #[error("invalid consensus matrix: {0}")]
    Consensus(#[from] crate::network::ConsensusDefect),

    #[error("invalid feature matrix: {0}")]
    Features(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("stationary distribution did not converge (residual {residual:.3e})")]
    StationaryNonConvergence { residual: f64 },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("generation failed after {attempts} attempts: {what}")]
    GenerationCap { attempts: usize, what: String },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("matrix A is not negative definite (largest symmetric eigenvalue {max_eigenvalue:.3e})")]
    NotNegativeDefinite { max_eigenvalue: f64 },

    #[error("theorem-level check failed: {0}")]
    BoundViolation(String),

    #[error("iterate diverged at iteration {iteration} (norm {norm:.3e})")]
    Divergence { iteration: u64, norm: f64 },

    #[error("step size too large for consensus contraction (delta = {delta})")]
    StepTooLarge { delta: f64 },

    #[error("conditions unsatisfiable at this scale: {0}")]
    Unsatisfiable(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mixing-time scan exceeded {cap} steps")]
    MixingCap { cap: u64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
