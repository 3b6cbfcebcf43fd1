use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("total event rate is zero; no transition can fire")]
    ZeroTotalRate,
    #[error("event rate at site {site} is not finite")]
    NonFiniteRate { site: usize },
    #[error("box size {box_size} does not partition {len} sites")]
    BadPartition { len: usize, box_size: usize },
    #[error("partition function diverges (p = 1 requires |eta| < beta, got eta = {eta}, beta = {beta})")]
    Divergent { eta: f64, beta: f64 },
    #[error("mean slope {u} is not attainable")]
    OutOfRange { u: f64 },
    #[error("exponent {value} exceeds the representable range at index {index}")]
    Overflow { index: usize, value: f64 },
    #[error("step size {dt:e} fell below the stiffness floor at t = {t}")]
    StiffnessAbort { t: f64, dt: f64 },
    #[error("state lost positivity at index {index} (value {value:e})")]
    NonPositiveState { index: usize, value: f64 },
    #[error("smallness precondition violated: ||h0||_2 = {norm} >= threshold {threshold}")]
    PreconditionViolated { norm: f64, threshold: f64 },
    #[error("grids are incompatible: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
