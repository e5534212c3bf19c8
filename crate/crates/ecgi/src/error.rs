use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry overlap: {0}")]
    GeometryOverlap(String),
    #[error("mesh quality: {0}")]
    MeshQuality(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
    #[error("conductivity tensor not elliptic on element {element}")]
    Ellipticity { element: usize },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("conjugate gradient did not reach tolerance after {iterations} iterations (relative residual {residual:.3e})")]
    CgDivergence { iterations: usize, residual: f64 },
    #[error("operator annihilated every start vector")]
    ZeroIterate,
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("simulation blew up at step {step} (|v| = {value:.3e} mV)")]
    BlowUp { step: usize, value: f64 },
    #[error("missing artifact: {0}")]
    MissingArtifacts(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_mismatch(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
