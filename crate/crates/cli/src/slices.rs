//! One- and two-parameter slices of the stage objective.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use groundpose::estimator::{field_cost, ParamVector};
use groundpose::{CameraIntrinsics, DisplacementField, PARAM_NAMES};
use image::{Rgb, RgbImage};

/// Parses a comma-separated list of one or two parameter names.
pub fn parse_axes(list: &str) -> Result<Vec<usize>> {
    let names: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() || names.len() > 2 {
        bail!("give one or two axes, got `{list}`");
    }
    let mut axes = Vec::new();
    for n in names {
        match PARAM_NAMES.iter().position(|p| *p == n) {
            Some(i) if !axes.contains(&i) => axes.push(i),
            Some(_) => bail!("axis `{n}` given twice"),
            None => bail!(
                "unknown axis `{n}`; expected one of {}",
                PARAM_NAMES.join(", ")
            ),
        }
    }
    Ok(axes)
}

fn is_length(axis: usize) -> bool {
    PARAM_NAMES[axis] == "tx" || PARAM_NAMES[axis] == "tz"
}

#[derive(Debug, Clone, Copy)]
pub struct SliceRange {
    /// Half width for angles, degrees.
    pub angle_deg: f64,
    /// Half width for lengths, mm.
    pub length_mm: f64,
    /// Samples per axis, odd so the center is sampled.
    pub steps: usize,
}

impl Default for SliceRange {
    fn default() -> Self {
        Self {
            angle_deg: 10.0,
            length_mm: 50.0,
            steps: 41,
        }
    }
}

impl SliceRange {
    fn offset(&self, axis: usize, i: usize) -> f64 {
        let half = if is_length(axis) {
            self.length_mm
        } else {
            self.angle_deg
        };
        let t = i as f64 / (self.steps - 1) as f64;
        -half + 2.0 * half * t
    }
}

/// Offsets in reporting units (degrees or mm) and the cost there; `None`
/// where some entry left the valid domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub offsets: Vec<f64>,
    pub cost: Option<f64>,
}

/// Samples the squared residual sum of the active entries around `center`.
/// Two-axis slices are returned row-major with the second axis fastest.
pub fn sample_slice(
    field: &DisplacementField,
    center: &ParamVector,
    k: &CameraIntrinsics,
    axes: &[usize],
    range: &SliceRange,
) -> Result<Vec<SliceSample>> {
    if range.steps < 3 || range.steps.is_multiple_of(2) {
        bail!("steps must be odd and at least 3, got {}", range.steps);
    }
    let active = field.active_indices();
    let n = range.steps;
    let total = n.pow(axes.len() as u32);
    let samples = (0..total)
        .map(|flat| {
            let mut rest = flat;
            let mut idx = vec![0; axes.len()];
            for slot in idx.iter_mut().rev() {
                *slot = rest % n;
                rest /= n;
            }
            let offsets: Vec<f64> = axes
                .iter()
                .zip(&idx)
                .map(|(&a, &i)| range.offset(a, i))
                .collect();
            let mut free = center.free();
            for (&a, &o) in axes.iter().zip(&offsets) {
                free[a] += if is_length(a) { o } else { o.to_radians() };
            }
            let p = center.with_free(free);
            let cost = if p.is_valid() {
                field_cost(field, &active, &p, k)
            } else {
                None
            };
            SliceSample { offsets, cost }
        })
        .collect();
    Ok(samples)
}

pub fn slice_csv(axes: &[usize], samples: &[SliceSample]) -> String {
    let mut s = String::new();
    for &a in axes {
        let unit = if is_length(a) { "mm" } else { "deg" };
        let _ = write!(s, "{}_{unit},", PARAM_NAMES[a]);
    }
    s.push_str("cost\n");
    for sample in samples {
        for o in &sample.offsets {
            let _ = write!(s, "{o},");
        }
        match sample.cost {
            Some(c) => {
                let _ = writeln!(s, "{c}");
            }
            None => s.push_str("nan\n"),
        }
    }
    s
}

/// Heat map of a two-axis slice: first axis down, second across, low cost
/// blue, high cost red, invalid samples black.
pub fn heat_map(samples: &[SliceSample], steps: usize) -> RgbImage {
    let logs: Vec<Option<f64>> = samples
        .iter()
        .map(|s| s.cost.map(|c| (1.0 + c).ln()))
        .collect();
    let lo = logs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = logs
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let n = steps as u32;
    RgbImage::from_fn(n, n, |x, y| match logs[(y * n + x) as usize] {
        Some(v) => {
            let t = (v - lo) / span;
            let r = (255.0 * t).round() as u8;
            let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
            let b = (255.0 * (1.0 - t)).round() as u8;
            Rgb([r, g, b])
        }
        None => Rgb([0, 0, 0]),
    })
}
