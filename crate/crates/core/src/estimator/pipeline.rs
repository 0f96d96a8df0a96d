//! Two-frame pipeline: image-plane initial estimate, then refinement on
//! virtual IPM planes built from the running estimate.

use rayon::prelude::*;

use super::coarse::{coarse_motion_search, CoarseSearchSettings};
use super::lm::LmSettings;
use super::residual::{predict_image, predict_ipm};
use super::robust::{reject_by_magnitude, reject_by_prediction, robust_estimate, RobustSettings};
use super::{
    DisplacementField, EstimationResult, FieldEntry, FieldPlane, ParamVector, Quality, Stage,
    StageRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ImagePoint};
use crate::ipm::{plan_ipm, plan_ipm_rotated, warp_to_ipm, IpmImage, IpmPlaneSpec};
use crate::patch_grid::{make_grid, shrink_to_fit, PatchPlane, PatchSpec};
use crate::raster::{ImageBuffer, Mask};
use crate::registration::{poc_register, window_center, window_origin, MIN_PATCH_SIZE};

/// Everything [`estimate_pair`] needs besides the two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Camera height, mm.
    pub height: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Grid margin, px.
    pub margin: f64,
    pub image_patch: usize,
    pub ipm_patch: usize,
    /// IPM sampling, mm per pixel.
    pub ipm_scale: f64,
    pub refinements: usize,
    /// Measure-and-solve rounds on the image plane.
    pub initial_passes: usize,
    pub initial_pitch: f64,
    pub subsets: usize,
    pub ratio: f64,
    pub seed: u64,
    pub magnitude_factor: f64,
    /// Displacements shorter than this (px) are never magnitude outliers.
    pub magnitude_floor: f64,
    pub min_confidence: f64,
    pub prediction_factor: f64,
    /// Deviations below this (IPM px) are never prediction outliers.
    pub prediction_floor: f64,
    /// Fewest valid pixels an IPM patch may hold, as a fraction.
    pub min_valid_fraction: f64,
    /// `None` starts directly from the level camera at `initial_pitch`.
    pub coarse_search: Option<CoarseSearchSettings>,
    pub lm: LmSettings,
    /// Solve each refinement on its own field plus the active entries of
    /// earlier refinements, re-expressed on the current planes.
    pub pool_refinements: bool,
    /// Turn the current frame's IPM raster by the estimated yaw so patch
    /// pairs differ by a translation only.
    pub align_yaw: bool,
    /// Ground mask on the image plane; grid points off the mask are dropped.
    pub mask: Option<Mask>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            height: 700.0,
            grid_rows: 9,
            grid_cols: 11,
            margin: 64.0,
            image_patch: 128,
            ipm_patch: 256,
            ipm_scale: 2.0,
            refinements: 2,
            initial_passes: 2,
            initial_pitch: std::f64::consts::FRAC_PI_3,
            subsets: 50,
            ratio: 0.6,
            seed: 0,
            magnitude_factor: 3.0,
            magnitude_floor: 1.0,
            min_confidence: 0.1,
            prediction_factor: 3.0,
            prediction_floor: 1.5,
            min_valid_fraction: 0.98,
            coarse_search: Some(CoarseSearchSettings::default()),
            lm: LmSettings::default(),
            pool_refinements: false,
            align_yaw: true,
            mask: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.height > 0.0 && self.height.is_finite()) {
            return bad(format!("height must be positive, got {}", self.height));
        }
        for (name, size) in [
            ("image_patch", self.image_patch),
            ("ipm_patch", self.ipm_patch),
        ] {
            if !size.is_power_of_two() || size < MIN_PATCH_SIZE {
                return bad(format!(
                    "{name} must be a power of two >= {MIN_PATCH_SIZE}, got {size}"
                ));
            }
        }
        if !(self.ipm_scale > 0.0 && self.ipm_scale.is_finite()) {
            return bad(format!(
                "ipm_scale must be positive, got {}",
                self.ipm_scale
            ));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must be in (0, 1], got {}", self.ratio));
        }
        if self.subsets == 0 {
            return bad("subsets must be at least 1".into());
        }
        if self.initial_passes == 0 {
            return bad("initial_passes must be at least 1".into());
        }
        if !(self.initial_pitch > 0.0 && self.initial_pitch < std::f64::consts::PI) {
            return bad(format!(
                "initial_pitch must be in (0, pi), got {}",
                self.initial_pitch
            ));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return bad(format!(
                "min_valid_fraction must be in [0, 1], got {}",
                self.min_valid_fraction
            ));
        }
        Ok(())
    }

    fn robust(&self) -> RobustSettings {
        RobustSettings {
            subsets: self.subsets,
            ratio: self.ratio,
            seed: self.seed,
            polish: true,
            lm: self.lm,
        }
    }

    /// Grid points the pipeline measures at.
    pub fn anchors(&self, k: &CameraIntrinsics) -> Result<Vec<ImagePoint>> {
        let grid = make_grid(k, self.grid_rows, self.grid_cols, self.margin)?;
        Ok(match &self.mask {
            Some(m) => grid.masked(m),
            None => grid.points().to_vec(),
        })
    }
}

/// Crops a pair of windows and registers them. `cur_center` is where the
/// reference window's geometric center is expected in the current raster.
/// Returns the anchor (reference geometric center) and the total
/// displacement.
fn register_pair(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    ref_center: ImagePoint,
    cur_center: ImagePoint,
    size: usize,
) -> Option<FieldEntry> {
    // crop_patch centers its window half a pixel before the rounded center
    let cur_request = ImagePoint::new(cur_center.u + 0.5, cur_center.v + 0.5);
    let (rx, ry) = window_origin(ref_center, size);
    let (cx, cy) = window_origin(cur_request, size);
    let a = prev.window(rx, ry, size).ok()?;
    let b = cur.window(cx, cy, size).ok()?;
    let d = poc_register(&a, &b).ok()?;
    let mut e = FieldEntry::new(
        window_center(ref_center, size),
        crate::registration::Displacement::new(
            (cx - rx) as f64 + d.dx,
            (cy - ry) as f64 + d.dy,
            d.confidence,
        ),
    );
    e.patch_size = size;
    Some(e)
}

/// Image-plane field at `anchors`, with current-frame windows placed where
/// `params` predicts.
pub fn measure_image_field(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    anchors: &[ImagePoint],
    params: &ParamVector,
    k: &CameraIntrinsics,
    size: usize,
) -> DisplacementField {
    let entries = anchors
        .par_iter()
        .map(|&m| {
            let anchor = window_center(m, size);
            predict_image(anchor, params, k)
                .ok()
                .and_then(|p| register_pair(prev, cur, m, p, size))
                .unwrap_or_else(|| FieldEntry::invalid(anchor))
        })
        .collect();
    DisplacementField::new(entries, FieldPlane::Image)
}

/// Virtual IPM rasters of both frames plus the field measured on them.
#[derive(Debug, Clone)]
pub struct IpmMeasurement {
    pub prev_spec: IpmPlaneSpec,
    pub cur_spec: IpmPlaneSpec,
    pub prev_ipm: IpmImage,
    pub cur_ipm: IpmImage,
    pub field: DisplacementField,
}

fn ipm_window_ok(ipm: &IpmImage, center: ImagePoint, size: usize, min_valid: f64) -> bool {
    let spec = shrink_to_fit(
        PatchSpec::new(center, PatchPlane::Ipm, size),
        ipm.image.width(),
        ipm.image.height(),
    );
    if !spec.valid || spec.size != size {
        return false;
    }
    let (x0, y0) = window_origin(center, size);
    ipm.valid.window_fraction(x0, y0, size) >= min_valid
}

/// Builds virtual IPM planes for both frames from `params`, warps the frames
/// and registers one patch pair per anchor. Patches are halved until both
/// windows fit their raster and are mostly covered by valid pixels.
pub fn measure_ipm_field(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    anchors: &[ImagePoint],
    params: &ParamVector,
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
) -> Result<IpmMeasurement> {
    let pad = config.ipm_patch / 2;
    let prev_spec = plan_ipm(anchors, &params.prev_pose(), k, config.ipm_scale, pad)?;
    let heading = if config.align_yaw { -params.yaw } else { 0.0 };
    let cur_spec = plan_ipm_rotated(
        anchors,
        &params.cur_pose(),
        k,
        config.ipm_scale,
        pad,
        heading,
    )?;
    let prev_ipm = warp_to_ipm(prev, &prev_spec, k);
    let cur_ipm = warp_to_ipm(cur, &cur_spec, k);

    let entries = anchors
        .par_iter()
        .map(|&m| {
            let Ok(a) = prev_spec.from_image(m, k) else {
                return FieldEntry::invalid(m);
            };
            let mut size = config.ipm_patch;
            while size >= MIN_PATCH_SIZE {
                let anchor = window_center(a, size);
                let Ok(p) = predict_ipm(anchor, params, &prev_spec, &cur_spec, k) else {
                    break;
                };
                let request = ImagePoint::new(p.u + 0.5, p.v + 0.5);
                if ipm_window_ok(&prev_ipm, a, size, config.min_valid_fraction)
                    && ipm_window_ok(&cur_ipm, request, size, config.min_valid_fraction)
                {
                    if let Some(e) = register_pair(&prev_ipm.image, &cur_ipm.image, a, p, size) {
                        return e;
                    }
                    break;
                }
                size /= 2;
            }
            FieldEntry::invalid(window_center(a, MIN_PATCH_SIZE))
        })
        .collect();
    let field = DisplacementField::new(
        entries,
        FieldPlane::Ipm {
            prev: prev_spec,
            cur: cur_spec,
        },
    );
    Ok(IpmMeasurement {
        prev_spec,
        cur_spec,
        prev_ipm,
        cur_ipm,
        field,
    })
}

/// Moves the active entries of an IPM field onto another pair of planes.
///
/// Each plane is a fixed map to its frame's image, so the measured
/// correspondence carries over exactly. Entries that leave either plane's
/// valid domain are dropped.
pub fn reexpress_field(
    field: &DisplacementField,
    prev: &IpmPlaneSpec,
    cur: &IpmPlaneSpec,
    k: &CameraIntrinsics,
) -> Vec<FieldEntry> {
    let FieldPlane::Ipm { prev: p0, cur: c0 } = field.plane() else {
        return Vec::new();
    };
    field
        .entries()
        .iter()
        .filter(|e| e.is_active())
        .filter_map(|e| {
            let d = e.displacement;
            let target = ImagePoint::new(e.anchor.u + d.dx, e.anchor.v + d.dy);
            let a = prev.from_image(p0.to_image(e.anchor, k).ok()?, k).ok()?;
            let b = cur.from_image(c0.to_image(target, k).ok()?, k).ok()?;
            let mut moved = *e;
            moved.anchor = a;
            moved.displacement.dx = b.u - a.u;
            moved.displacement.dy = b.v - a.v;
            Some(moved)
        })
        .collect()
}

fn solve_stage(
    stage: Stage,
    field: DisplacementField,
    init: &ParamVector,
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
) -> Result<StageRecord> {
    solve_pooled(stage, field, &[], init, k, config)
}

fn solve_pooled(
    stage: Stage,
    field: DisplacementField,
    earlier: &[DisplacementField],
    init: &ParamVector,
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
) -> Result<StageRecord> {
    let out = if let (false, FieldPlane::Ipm { prev, cur }) = (earlier.is_empty(), field.plane()) {
        let mut entries = field.entries().to_vec();
        for f in earlier {
            entries.extend(reexpress_field(f, prev, cur, k));
        }
        let pooled = DisplacementField::new(entries, field.plane().clone());
        robust_estimate(&pooled, init, k, &config.robust())?
    } else {
        robust_estimate(&field, init, k, &config.robust())?
    };
    Ok(StageRecord {
        stage,
        params: out.params,
        rms: out.rms,
        inlier_count: out.inlier_count,
        iterations: out.iterations,
        field,
    })
}

/// Full two-frame estimate with default behavior.
pub fn estimate_pair(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
) -> Result<EstimationResult> {
    estimate_pair_with(prev, cur, k, config, &mut |_, _| {})
}

/// As [`estimate_pair`], calling `hook` on every freshly measured field
/// before outlier rejection.
pub fn estimate_pair_with(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
    hook: &mut dyn FnMut(Stage, &mut DisplacementField),
) -> Result<EstimationResult> {
    config.validate()?;
    k.validate()?;
    for (name, img) in [("previous", prev), ("current", cur)] {
        if img.width() != k.width || img.height() != k.height {
            return Err(Error::SizeMismatch(format!(
                "{name} frame is {}x{}, intrinsics expect {}x{}",
                img.width(),
                img.height(),
                k.width,
                k.height
            )));
        }
    }
    let anchors = config.anchors(k)?;
    let start = ParamVector::initial(config.initial_pitch, config.height);
    let mut params = match &config.coarse_search {
        Some(s) => coarse_motion_search(prev, cur, k, &start, config.mask.as_ref(), s),
        None => start,
    };

    let mut initial = None;
    for _ in 0..config.initial_passes {
        let mut field = measure_image_field(prev, cur, &anchors, &params, k, config.image_patch);
        hook(Stage::Initial, &mut field);
        reject_by_magnitude(
            &mut field,
            config.magnitude_factor,
            config.magnitude_floor,
            config.min_confidence,
        );
        let record = solve_stage(Stage::Initial, field, &params, k, config)?;
        params = record.params;
        initial = Some(record);
    }
    let initial = initial.expect("at least one initial pass");
    let mut result = EstimationResult {
        params: initial.params,
        rms: initial.rms,
        inlier_count: initial.inlier_count,
        iterations: initial.iterations,
        history: vec![initial],
        quality: Quality::Good,
    };

    for r in 1..=config.refinements {
        let stage = Stage::Refine(r);
        let attempt =
            measure_ipm_field(prev, cur, &anchors, &result.params, k, config).and_then(|m| {
                let mut field = m.field;
                hook(stage, &mut field);
                for e in field.entries_mut() {
                    if e.displacement.confidence < config.min_confidence {
                        e.inlier = false;
                    }
                }
                reject_by_prediction(
                    &mut field,
                    &result.params,
                    k,
                    config.prediction_factor,
                    config.prediction_floor,
                );
                let earlier: Vec<DisplacementField> = if config.pool_refinements {
                    result.history[1..]
                        .iter()
                        .map(|h| h.field.clone())
                        .collect()
                } else {
                    Vec::new()
                };
                solve_pooled(stage, field, &earlier, &result.params, k, config)
            });
        match attempt {
            Ok(record) => {
                result.params = record.params;
                result.rms = record.rms;
                result.inlier_count = record.inlier_count;
                result.iterations = record.iterations;
                result.history.push(record);
            }
            Err(_) => {
                result.quality = Quality::Degraded;
                break;
            }
        }
    }
    Ok(result)
}
