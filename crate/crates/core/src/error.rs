use thiserror::Error;

/// Errors produced by the geometry, registration and estimation stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point maps behind or onto the camera plane")]
    NonPositiveDepth,
    #[error("viewing ray does not reach the ground plane in front of the camera")]
    AboveHorizon,
    #[error("patch size mismatch: {0}")]
    SizeMismatch(String),
    #[error("patch has (near) zero intensity variance")]
    DegeneratePatch,
    #[error("window of size {size} at ({x}, {y}) protrudes from a {width}x{height} raster")]
    OutOfBounds {
        x: i64,
        y: i64,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("grid margins leave no interior")]
    EmptyInterior,
    #[error("insufficient inliers: need {needed}, have {available}")]
    InsufficientInliers { needed: usize, available: usize },
    #[error("IPM raster of {width}x{height} pixels exceeds the size limit")]
    IpmTooLarge { width: usize, height: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
