use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected a unit vector, got norm {norm}")]
    NonUnitVector { norm: f64 },

    #[error("degree {degree} exceeds the supported maximum {max}")]
    UnsupportedDegree { degree: usize, max: usize },

    #[error("path ({l1}, {l2}) -> {lout} violates the triangle inequality")]
    TriangleViolation { l1: usize, l2: usize, lout: usize },

    #[error("real-basis coupling table for path {path:?} has imaginary residue {residue:e}")]
    ComplexResidue {
        path: (usize, usize, usize),
        residue: f64,
    },

    #[error("invalid irreps spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("direction vector has norm {norm:e} <= {eps:e}; alignment is undefined")]
    DegenerateDirection { norm: f64, eps: f64 },

    #[error("matrix is not a proper rotation (residual {residual:e})")]
    InvalidRotation { residual: f64 },

    #[error("translation solve for degree {degree} is rank deficient (condition ratio {ratio:e})")]
    RankDeficient { degree: usize, ratio: f64 },

    #[error("convention check failed: {0}")]
    Convention(String),

    #[error("unsupported coupling path: {0}")]
    UnsupportedPath(String),

    #[error("invalid neighbor index: {0}")]
    InvalidNeighborIndex(String),

    #[error("fixture error: {0}")]
    Fixture(String),
}
