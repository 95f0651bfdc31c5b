use thiserror::Error;

/// Axis of a grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => f.write_str("x"),
            Axis::Y => f.write_str("y"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} coordinate {value} outside grid range [{lo}, {hi})")]
    OutOfRange {
        axis: Axis,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("cell ({i}, {j}) outside {nx}x{ny} grid")]
    CellOutOfBounds { i: i64, j: i64, nx: usize, ny: usize },
    #[error("degenerate covariance (determinant {det:e})")]
    DegenerateCovariance { det: f64 },
    #[error("occupancy grids do not share one grid spec")]
    GridMismatch,
    #[error("no admissible convex hull: {0}")]
    HullNotFound(&'static str),
    #[error("degenerate hull: all vertices collinear")]
    DegenerateHull,
    #[error("hull vertices are not convex and counterclockwise")]
    NonConvexHull,
    #[error("steering angle {0} rad at or beyond the tan singularity")]
    SteeringDomain(f64),
    #[error("no admissible hull at the first prediction step")]
    InfeasibleStart,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
