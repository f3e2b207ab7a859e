use std::path::PathBuf;

use crate::flow::TrajectoryPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported Daubechies order {order} (supported: 1..={max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error(
        "refinement matrix has a {multiplicity}-dimensional eigenspace at eigenvalue {eigenvalue}"
    )]
    DegenerateRefinement {
        eigenvalue: f64,
        multiplicity: usize,
    },

    #[error("order {order} scaling functions are not differentiable (need K >= 3)")]
    NonDifferentiableOrder { order: usize },

    #[error("point {numerator}/2^{log2_denominator} is not resolvable on a level-{level} grid")]
    InsufficientResolution {
        numerator: i64,
        log2_denominator: u32,
        level: u32,
    },

    #[error("polynomial degree {degree} needs more than {order} vanishing moments")]
    InsufficientVanishingMoments { degree: usize, order: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("requested {requested} levels but at most {max} fit")]
    Depth { requested: usize, max: usize },

    #[error("fixed-point system is degenerate: {0}")]
    DegenerateFixedPoint(String),

    #[error("tensor is already at scale {scale}; rescaling starts from scale 0")]
    AlreadyScaled { scale: i32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("corrupt coefficient table: {0}")]
    CorruptTable(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("index {index} out of range (size {size})")]
    Index { index: usize, size: usize },

    #[error("tensor scale {tensor} does not match lattice scale {config}")]
    ScaleMismatch { tensor: i32, config: i32 },

    #[error("tensor order {tensor} does not match lattice order {config}")]
    OrderMismatch { tensor: usize, config: usize },

    #[error("tachyonic configuration: frequency-squared eigenvalue {0} < 0")]
    Tachyonic(f64),

    #[error("Lanczos did not converge; best residuals {residuals:?}")]
    ConvergenceFailure { residuals: Vec<f64> },

    #[error("flow step underflow at lambda = {lambda}")]
    Stiffness {
        lambda: f64,
        trajectory: Vec<TrajectoryPoint>,
    },

    #[error("test function is not negligible at the window edge: {0}")]
    Windowing(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable kebab-case name used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder { .. } => "unsupported-order",
            Error::DegenerateRefinement { .. } => "degenerate-refinement",
            Error::NonDifferentiableOrder { .. } => "non-differentiable-order",
            Error::InsufficientResolution { .. } => "insufficient-resolution",
            Error::InsufficientVanishingMoments { .. } => "insufficient-vanishing-moments",
            Error::Shape(_) => "shape",
            Error::Depth { .. } => "depth",
            Error::DegenerateFixedPoint(_) => "degenerate-fixed-point",
            Error::AlreadyScaled { .. } => "already-scaled",
            Error::Parse(_) => "parse",
            Error::CorruptTable(_) => "corrupt-table",
            Error::Io { .. } => "io",
            Error::Index { .. } => "index",
            Error::ScaleMismatch { .. } => "scale-mismatch",
            Error::OrderMismatch { .. } => "order-mismatch",
            Error::Tachyonic(_) => "tachyonic-configuration",
            Error::ConvergenceFailure { .. } => "convergence-failure",
            Error::Stiffness { .. } => "stiffness",
            Error::Windowing(_) => "windowing",
            Error::InvalidParameter(_) => "invalid-parameter",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
