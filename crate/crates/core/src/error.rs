use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid background: {0}")]
    InvalidBackground(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite embedding value at point {point}, component {component}")]
    NonFinite { point: usize, component: usize },

    #[error("degenerate induced metric at point {point} (|det| = {det:e})")]
    DegenerateMetric { point: usize, det: f64 },

    #[error("induced metric is not timelike at point {point} (det = {det:e})")]
    NotTimelike { point: usize, det: f64 },

    #[error("degenerate base metric at point {point}; chirality scalar undefined")]
    DegenerateBaseMetric { point: usize },

    #[error("normal frame construction failed at point {point}: found {found} of {needed} normals")]
    FrameConstruction {
        point: usize,
        found: usize,
        needed: usize,
    },

    #[error("insufficient slice history: {0}")]
    InsufficientHistory(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("CFL condition violated: dtau = {dtau:e} exceeds {limit:e}")]
    Cfl { dtau: f64, limit: f64 },

    #[error("mover {name} is not unit speed (max deviation {deviation:e})")]
    MoverNotNormalized { name: &'static str, deviation: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evolution aborted at tau = {tau}: {source}")]
    Aborted {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
