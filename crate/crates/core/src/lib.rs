//! Monocular ground-camera pose and planar motion from consecutive frames.
//!
//! A grid of patches is registered between two frames by phase-only
//! correlation, and the resulting displacement field is explained by the
//! pitch and roll of both frames plus the planar motion between them. The
//! estimate is refined by re-measuring on virtual bird's-eye (IPM) planes
//! induced by the running estimate. [`synth`] renders scenes with exactly
//! known parameters for testing.

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod ipm;
pub mod patch_grid;
pub mod raster;
pub mod registration;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{
    estimate_pair, estimate_pair_with, DisplacementField, EstimationResult, EstimatorConfig,
    FieldEntry, FieldPlane, ParamVector, Quality, Stage, StageRecord, PARAM_NAMES,
};
pub use geometry::{CameraIntrinsics, GroundPoint, ImagePoint, MotionParams, PoseParams};
pub use ipm::{IpmImage, IpmPlaneSpec};
pub use raster::{ImageBuffer, Mask};
pub use registration::{poc_register, Displacement};
