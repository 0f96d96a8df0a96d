//! Geometric bundle adjustment of two-frame pose and planar motion against
//! a measured displacement field, on the image plane or on a pair of
//! virtual IPM planes.

mod coarse;
mod lm;
mod pipeline;
mod residual;
mod robust;

use std::fmt;

pub use coarse::{coarse_motion_search, CoarseSearchSettings};
pub use lm::{solve_lm, LmOutcome, LmSettings};
pub use pipeline::{
    estimate_pair, estimate_pair_with, measure_image_field, measure_ipm_field, EstimatorConfig,
    IpmMeasurement,
};
pub use residual::{
    field_cost, predict, predict_image, predict_ipm, residual, residual_image, residual_ipm,
    residual_with_jacobian,
};
pub use robust::{
    reject_by_magnitude, reject_by_prediction, robust_estimate, RobustOutcome, RobustSettings,
};

use crate::geometry::{ImagePoint, MotionParams, PoseParams};
use crate::ipm::IpmPlaneSpec;
use crate::registration::Displacement;

/// Names of the seven free parameters, in vector order.
pub const PARAM_NAMES: [&str; 7] = [
    "pitch_prev",
    "roll_prev",
    "pitch_cur",
    "roll_cur",
    "tx",
    "tz",
    "yaw",
];

/// Both frames' pitch and roll plus the planar motion between them. The
/// camera height is carried along but never optimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    pub pitch_prev: f64,
    pub roll_prev: f64,
    pub pitch_cur: f64,
    pub roll_cur: f64,
    pub tx: f64,
    pub tz: f64,
    pub yaw: f64,
    pub height: f64,
}

impl ParamVector {
    /// Level camera at `pitch`, no motion.
    pub fn initial(pitch: f64, height: f64) -> Self {
        Self {
            pitch_prev: pitch,
            roll_prev: 0.0,
            pitch_cur: pitch,
            roll_cur: 0.0,
            tx: 0.0,
            tz: 0.0,
            yaw: 0.0,
            height,
        }
    }

    pub fn from_parts(prev: &PoseParams, cur: &PoseParams, motion: &MotionParams) -> Self {
        Self {
            pitch_prev: prev.pitch,
            roll_prev: prev.roll,
            pitch_cur: cur.pitch,
            roll_cur: cur.roll,
            tx: motion.tx,
            tz: motion.tz,
            yaw: motion.yaw,
            height: prev.height,
        }
    }

    pub fn prev_pose(&self) -> PoseParams {
        PoseParams {
            pitch: self.pitch_prev,
            roll: self.roll_prev,
            height: self.height,
        }
    }

    pub fn cur_pose(&self) -> PoseParams {
        PoseParams {
            pitch: self.pitch_cur,
            roll: self.roll_cur,
            height: self.height,
        }
    }

    pub fn motion(&self) -> MotionParams {
        MotionParams::new(self.tx, self.tz, self.yaw)
    }

    pub fn free(&self) -> [f64; 7] {
        [
            self.pitch_prev,
            self.roll_prev,
            self.pitch_cur,
            self.roll_cur,
            self.tx,
            self.tz,
            self.yaw,
        ]
    }

    pub fn with_free(&self, v: [f64; 7]) -> Self {
        Self {
            pitch_prev: v[0],
            roll_prev: v[1],
            pitch_cur: v[2],
            roll_cur: v[3],
            tx: v[4],
            tz: v[5],
            yaw: v[6],
            height: self.height,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.prev_pose().is_valid()
            && self.cur_pose().is_valid()
            && self.tx.is_finite()
            && self.tz.is_finite()
            && self.yaw.is_finite()
    }

    pub fn travel(&self) -> f64 {
        self.tx.hypot(self.tz)
    }
}

/// One anchor of a displacement field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEntry {
    /// Raster position on the previous frame's plane.
    pub anchor: ImagePoint,
    pub displacement: Displacement,
    pub inlier: bool,
    /// False when no usable patch pair could be formed.
    pub valid: bool,
    pub patch_size: usize,
}

impl FieldEntry {
    pub fn new(anchor: ImagePoint, displacement: Displacement) -> Self {
        Self {
            anchor,
            displacement,
            inlier: true,
            valid: true,
            patch_size: 0,
        }
    }

    pub fn invalid(anchor: ImagePoint) -> Self {
        Self {
            anchor,
            displacement: Displacement::default(),
            inlier: false,
            valid: false,
            patch_size: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.valid && self.inlier
    }
}

/// Plane a displacement field is measured on.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldPlane {
    Image,
    Ipm {
        prev: IpmPlaneSpec,
        cur: IpmPlaneSpec,
    },
}

/// Per-anchor displacements between two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    entries: Vec<FieldEntry>,
    plane: FieldPlane,
}

impl DisplacementField {
    pub fn new(entries: Vec<FieldEntry>, plane: FieldPlane) -> Self {
        Self { entries, plane }
    }

    pub fn entries(&self) -> &[FieldEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [FieldEntry] {
        &mut self.entries
    }

    pub fn plane(&self) -> &FieldPlane {
        &self.plane
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_active())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_active()).count()
    }
}

/// Pipeline stage label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Refine(usize),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Initial => write!(f, "initial"),
            Stage::Refine(k) => write!(f, "refine-{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Good,
    /// A refinement stage failed; the estimate is from an earlier stage.
    Degraded,
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quality::Good => write!(f, "ok"),
            Quality::Degraded => write!(f, "degraded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub params: ParamVector,
    /// Root mean square residual vector length in plane pixels.
    pub rms: f64,
    pub inlier_count: usize,
    pub iterations: usize,
    /// The field the stage solved against, with final inlier flags.
    pub field: DisplacementField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub params: ParamVector,
    pub rms: f64,
    pub inlier_count: usize,
    pub iterations: usize,
    pub history: Vec<StageRecord>,
    pub quality: Quality,
}
