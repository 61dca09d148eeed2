use thiserror::Error;

/// Failures raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid dimensions {height}x{width} for {len} samples")]
    InvalidDimensions {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("value out of range: {0}")]
    RangeViolation(String),
    #[error("scan window at ({row}, {col}) does not fit the {canvas_height}x{canvas_width} canvas")]
    PlanOutOfBounds {
        row: usize,
        col: usize,
        canvas_height: usize,
        canvas_width: usize,
    },
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe estimate has zero maximum intensity")]
    ZeroProbe,
    #[error("object window at scan index {0} has zero maximum intensity")]
    ZeroObjectWindow(usize),
    #[error("patch at {origin:?} is empty after cropping by {margin} px")]
    EmptyAfterCrop { origin: (usize, usize), margin: usize },
    #[error("patch at {origin:?} with extent {extent:?} exceeds the {canvas:?} canvas")]
    NoCoverage {
        origin: (usize, usize),
        extent: (usize, usize),
        canvas: (usize, usize),
    },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("reference field has zero norm over the mask")]
    ZeroNormTruth,
    #[error("field must be square, got {0}x{1}")]
    NonSquare(usize, usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
