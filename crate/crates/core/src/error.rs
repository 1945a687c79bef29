use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("N must be power of two and at least 16 (got {0})")]
    GridSize(usize),
    #[error("nuclear dimension must be 1 or 2 (got {0})")]
    Dimension(usize),
    #[error("box length must be positive (got {0})")]
    BoxLength(f64),
    #[error("dense dimension {dim} exceeds cap {cap}")]
    DenseCap { dim: usize, cap: usize },
    #[error("derivative order {0} exceeds 4")]
    DerivativeOrder(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("block at grid point {point} is not real symmetric (defect {defect:.3e})")]
    NotRealSymmetric { point: usize, defect: f64 },
    #[error("fiber vector at grid point {point} has norm deviating from 1 by {deviation:.3e}")]
    FiberNorm { point: usize, deviation: f64 },
    #[error("measured gap {measured:.6e} is below required {required:.6e}")]
    GapTooSmall { measured: f64, required: f64 },
    #[error("ground eigenvalue degenerate at grid point {point} (splitting {splitting:.3e})")]
    Degenerate { point: usize, splitting: f64 },
    #[error("gauge broken: {0}")]
    Gauge(String),
    #[error("contour invalid: {0}")]
    Contour(String),
    #[error("operator not Hermitian (defect {defect:.3e}){context}")]
    NotHermitian { defect: f64, context: String },
    #[error("state outside propagator subspace (residual {0:.3e})")]
    OutsideSubspace(f64),
    #[error("recursion order {0} unsupported (1..=3)")]
    RecursionOrder(usize),
    #[error("step size {dt} too large: {reason}; try dt <= {suggested}")]
    StepTooLarge { dt: f64, suggested: f64, reason: String },
    #[error("matrix pair rejected: {0}")]
    MatrixPair(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to parse config: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("eigendecomposition failed")]
    Eigen,
}

pub type Result<T> = std::result::Result<T, LabError>;
