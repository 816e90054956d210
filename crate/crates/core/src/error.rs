use thiserror::Error;

/// Errors reported by the solver and verification layers.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension {0} unsupported: {1}")]
    DimensionUnsupported(u32, String),
    #[error("concentration function undefined at r = {0}: V and K must be positive")]
    UndefinedConcentration(f64),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("inconsistent region: point at r = {0} lies outside Lambda with r <= rho0 = {1}")]
    InconsistentRegion(f64, f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("converged to the trivial solution (J = 0 contradicts c_eps > 0)")]
    DegenerateSolution,
    #[error("config error: {0}")]
    Config(String),
    #[error("quadratic form not positive: {0}")]
    FormNotPositive(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("sweep requires at least 3 converged epsilon values, got {0}")]
    InsufficientSweep(usize),
    #[error("no maximum found along the Nehari ray: {0}")]
    NoMaximum(String),
    #[error("ray path invalid: {0}")]
    PathInvalid(String),
    #[error("envelope fit impossible: {0}")]
    FitImpossible(String),
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),
    #[error("grids do not match: fields must share the same radial grid")]
    GridMismatch,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
