use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum FpsiError {
    #[error("degenerate element {element}: signed area {area:e}")]
    DegenerateElement { element: usize, area: f64 },
    #[error("singular deformation gradient on element {element}")]
    SingularElement { element: usize },
    #[error("point ({0}, {1}) could not be located in the mesh")]
    PointLocation(f64, f64),
    #[error("invalid interface grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("geometry certificate failed: {0}")]
    Certificate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FpsiError>;
