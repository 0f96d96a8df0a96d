//! Interest-point lattice and patch sizing.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ImagePoint};
use crate::raster::Mask;
use crate::registration::{window_origin, MIN_PATCH_SIZE};

/// Uniform lattice of interest points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestGrid {
    points: Vec<ImagePoint>,
    rows: usize,
    cols: usize,
}

impl InterestGrid {
    pub fn points(&self) -> &[ImagePoint] {
        &self.points
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Points that fall on set pixels of a ground mask.
    pub fn masked(&self, mask: &Mask) -> Vec<ImagePoint> {
        self.points
            .iter()
            .copied()
            .filter(|p| mask.at(p.u, p.v))
            .collect()
    }
}

/// `cols` x `rows` lattice spanning `[margin, width - margin] x [margin, height - margin]`.
pub fn make_grid(
    k: &CameraIntrinsics,
    rows: usize,
    cols: usize,
    margin: f64,
) -> Result<InterestGrid> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2x2 points, got {cols}x{rows}"
        )));
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if !(margin >= 0.0) || w - 2.0 * margin <= 0.0 || h - 2.0 * margin <= 0.0 {
        return Err(Error::EmptyInterior);
    }
    let du = (w - 2.0 * margin) / (cols - 1) as f64;
    let dv = (h - 2.0 * margin) / (rows - 1) as f64;
    let points = (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| ImagePoint::new(margin + c as f64 * du, margin + r as f64 * dv))
        })
        .collect();
    Ok(InterestGrid { points, rows, cols })
}

/// Plane a patch lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchPlane {
    Image,
    Ipm,
}

/// A square registration window on some plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    /// Raster coordinates on `plane`; the window is centered on the rounded value.
    pub center: ImagePoint,
    pub plane: PatchPlane,
    pub size: usize,
    pub valid: bool,
}

impl PatchSpec {
    pub fn new(center: ImagePoint, plane: PatchPlane, size: usize) -> Self {
        Self {
            center,
            plane,
            size,
            valid: true,
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        window_fits(self.center, self.size, width, height)
    }
}

pub(crate) fn window_fits(center: ImagePoint, size: usize, width: usize, height: usize) -> bool {
    let (x0, y0) = window_origin(center, size);
    x0 >= 0 && y0 >= 0 && x0 as usize + size <= width && y0 as usize + size <= height
}

/// Largest power-of-two size (>= 32, <= `spec.size`) whose window fits in
/// the plane; marks the spec invalid when none does.
pub fn shrink_to_fit(spec: PatchSpec, plane_width: usize, plane_height: usize) -> PatchSpec {
    let mut size = if spec.size.is_power_of_two() {
        spec.size
    } else {
        spec.size.next_power_of_two() / 2
    };
    while size >= MIN_PATCH_SIZE {
        if window_fits(spec.center, size, plane_width, plane_height) {
            return PatchSpec {
                size,
                valid: spec.valid,
                ..spec
            };
        }
        size /= 2;
    }
    PatchSpec {
        size: MIN_PATCH_SIZE,
        valid: false,
        ..spec
    }
}
