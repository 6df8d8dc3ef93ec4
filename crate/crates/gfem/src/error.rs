use thiserror::Error;

pub type Result<T> = std::result::Result<T, GfemError>;

#[derive(Debug, Error)]
pub enum GfemError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("covering failure: {uncovered} sample points uncovered, witness ({:.6}, {:.6})", witness[0], witness[1])]
    CoverageFailure { witness: [f64; 2], uncovered: usize },

    #[error("normalization failure: partition denominator {value:e} at ({:.6}, {:.6})", point[0], point[1])]
    NormalizationFailure { point: [f64; 2], value: f64 },

    #[error("degenerate local basis: {0}")]
    DegenerateBasis(String),

    #[error("incompatible Neumann data: <g, 1> = {0:e}")]
    CompatibilityError(f64),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("test-space orthogonalization failure: {0}")]
    Orthogonalization(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
