//! Exhaustive low-resolution motion search that seeds the initial stage.
//!
//! Patch registration only captures displacements up to a fraction of the
//! patch size, while a frame interval can move the ground by hundreds of
//! pixels. The search scores candidate (pitch, tx, tz) triples, at zero roll
//! and yaw, by the normalized cross-correlation of the previous frame with
//! the current frame resampled through the candidate's ground homography.

use rayon::prelude::*;

use super::ParamVector;
use crate::geometry::{backproject, CameraIntrinsics, GroundPoint, PoseParams};
use crate::raster::{ImageBuffer, Mask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseSearchSettings {
    /// Downsampling factor of the first level.
    pub coarse_factor: usize,
    /// Downsampling factor of the second level.
    pub fine_factor: usize,
    /// Translation step of the first level, mm.
    pub coarse_step: f64,
    /// Translation step of the second level, mm.
    pub fine_step: f64,
    /// Largest |tz| searched, mm.
    pub max_forward: f64,
    /// Largest |tx| searched, mm.
    pub max_lateral: f64,
    /// Pitch candidates on each side of the initial pitch.
    pub pitch_steps: usize,
    /// Spacing of the pitch candidates, rad.
    pub pitch_spacing: f64,
    /// Fewest overlapping samples a candidate needs, as a fraction of the
    /// previous frame's samples.
    pub min_overlap: f64,
}

impl Default for CoarseSearchSettings {
    fn default() -> Self {
        Self {
            coarse_factor: 8,
            fine_factor: 4,
            coarse_step: 20.0,
            fine_step: 5.0,
            max_forward: 400.0,
            max_lateral: 200.0,
            pitch_steps: 3,
            pitch_spacing: 5f64.to_radians(),
            min_overlap: 0.15,
        }
    }
}

struct Level {
    factor: f64,
    cur: ImageBuffer,
    /// Downsampled previous-frame samples: intensity and full-resolution pixel.
    samples: Vec<(f64, f64, f64)>,
}

impl Level {
    fn new(prev: &ImageBuffer, cur: &ImageBuffer, factor: usize, mask: Option<&Mask>) -> Self {
        let p = prev.downsample(factor);
        let off = (factor as f64 - 1.0) / 2.0;
        let mut samples = Vec::with_capacity(p.width() * p.height());
        for y in 0..p.height() {
            for x in 0..p.width() {
                let u = x as f64 * factor as f64 + off;
                let v = y as f64 * factor as f64 + off;
                if mask.is_none_or(|m| m.at(u, v)) {
                    samples.push((p.get(x, y) as f64, u, v));
                }
            }
        }
        Self {
            factor: factor as f64,
            cur: cur.downsample(factor),
            samples,
        }
    }

    /// Zero-normalized cross-correlation of a candidate, `None` when the
    /// overlap is too small or flat.
    fn score(
        &self,
        pose: &PoseParams,
        ground: &[Option<GroundPoint>],
        tx: f64,
        tz: f64,
        k: &CameraIntrinsics,
        min: usize,
    ) -> Option<f64> {
        let r = pose.camera_to_ground();
        let off = (self.factor - 1.0) / 2.0;
        let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (s, g) in self.samples.iter().zip(ground) {
            let Some(g) = g else { continue };
            // camera-frame coordinates of the moved ground point
            let (x, y, z) = (g.x - tx, pose.height, g.z - tz);
            let xc = r[(0, 0)] * x + r[(1, 0)] * y + r[(2, 0)] * z;
            let yc = r[(0, 1)] * x + r[(1, 1)] * y + r[(2, 1)] * z;
            let zc = r[(0, 2)] * x + r[(1, 2)] * y + r[(2, 2)] * z;
            if zc <= 1e-9 {
                continue;
            }
            let u = k.fx * xc / zc + k.cx;
            let v = k.fy * yc / zc + k.cy;
            let Some(b) = self
                .cur
                .sample((u - off) / self.factor, (v - off) / self.factor)
            else {
                continue;
            };
            let (a, b) = (s.0, b as f64);
            n += 1;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        if n < min.max(8) {
            return None;
        }
        let nf = n as f64;
        let va = saa - sa * sa / nf;
        let vb = sbb - sb * sb / nf;
        if va <= 1e-12 || vb <= 1e-12 {
            return None;
        }
        Some((sab - sa * sb / nf) / (va * vb).sqrt())
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    score: f64,
    // lower is preferred on ties: pitch distance from the start, then travel
    key: (usize, f64),
    pitch: f64,
    tx: f64,
    tz: f64,
}

impl Best {
    fn better_than(&self, other: &Option<Best>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score > o.score + 1e-9
                    || ((self.score - o.score).abs() <= 1e-9 && self.key < o.key)
            }
        }
    }
}

fn steps(limit: f64, step: f64) -> Vec<f64> {
    let n = (limit / step).floor() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

fn search(
    level: &Level,
    pitches: &[(usize, f64)],
    txs: &[f64],
    tzs: &[f64],
    height: f64,
    k: &CameraIntrinsics,
    min_overlap: f64,
) -> Option<Best> {
    let min = (min_overlap * level.samples.len() as f64).ceil() as usize;
    let per_pitch: Vec<Option<Best>> = pitches
        .par_iter()
        .map(|&(rank, pitch)| {
            let pose = PoseParams {
                pitch,
                roll: 0.0,
                height,
            };
            let ground: Vec<Option<GroundPoint>> = level
                .samples
                .iter()
                .map(|&(_, u, v)| {
                    backproject(crate::geometry::ImagePoint::new(u, v), &pose, k).ok()
                })
                .collect();
            let mut best: Option<Best> = None;
            for &tz in tzs {
                for &tx in txs {
                    if let Some(score) = level.score(&pose, &ground, tx, tz, k, min) {
                        let cand = Best {
                            score,
                            key: (rank, tx * tx + tz * tz),
                            pitch,
                            tx,
                            tz,
                        };
                        if cand.better_than(&best) {
                            best = Some(cand);
                        }
                    }
                }
            }
            best
        })
        .collect();
    let mut best = None;
    for b in per_pitch.into_iter().flatten() {
        if b.better_than(&best) {
            best = Some(b);
        }
    }
    best
}

fn pitch_ladder(center: f64, steps: usize, spacing: f64) -> Vec<(usize, f64)> {
    let s = steps as i64;
    (-s..=s)
        .map(|i| (i.unsigned_abs() as usize, center + i as f64 * spacing))
        .filter(|&(_, p)| p > 0.05 && p < std::f64::consts::PI - 0.05)
        .collect()
}

/// Level-camera, zero-yaw parameters that best align the two frames, or the
/// plain initialization when no candidate overlaps enough.
pub fn coarse_motion_search(
    prev: &ImageBuffer,
    cur: &ImageBuffer,
    k: &CameraIntrinsics,
    init: &ParamVector,
    mask: Option<&Mask>,
    settings: &CoarseSearchSettings,
) -> ParamVector {
    let s = settings;
    let level_a = Level::new(prev, cur, s.coarse_factor, mask);
    let pitches = pitch_ladder(init.pitch_prev, s.pitch_steps, s.pitch_spacing);
    let Some(a) = search(
        &level_a,
        &pitches,
        &steps(s.max_lateral, s.coarse_step),
        &steps(s.max_forward, s.coarse_step),
        init.height,
        k,
        s.min_overlap,
    ) else {
        return *init;
    };

    let level_b = Level::new(prev, cur, s.fine_factor, mask);
    let half = s.pitch_spacing / 2.0;
    let pitches: Vec<(usize, f64)> = pitch_ladder(a.pitch, 2, half / 2.0);
    let local = steps(s.coarse_step, s.fine_step);
    let txs: Vec<f64> = local.iter().map(|d| a.tx + d).collect();
    let tzs: Vec<f64> = local.iter().map(|d| a.tz + d).collect();
    let b = search(
        &level_b,
        &pitches,
        &txs,
        &tzs,
        init.height,
        k,
        s.min_overlap,
    )
    .unwrap_or(a);

    ParamVector {
        pitch_prev: b.pitch,
        roll_prev: 0.0,
        pitch_cur: b.pitch,
        roll_cur: 0.0,
        tx: b.tx,
        tz: b.tz,
        yaw: 0.0,
        height: init.height,
    }
}
