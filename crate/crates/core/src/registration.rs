//! Phase-only correlation (POC) between two equal-sized square patches.
//!
//! Both patches are mean-removed and Hann-windowed, transformed, and the
//! cross-phase spectrum `G conj(F) / |G conj(F)|` (F: reference, G: current)
//! is weighted by a smooth radial low-pass that keeps the lowest half of the
//! frequency band. The inverse transform is a correlation surface whose peak
//! sits at the translation of the current patch relative to the reference;
//! the peak height is the confidence (1 for identical patches). The integer
//! peak is refined per axis with a three-point quadratic fit, and the
//! registration is repeated with both windows restricted to the content
//! the estimate says the patches share.
//!
//! Sign convention: a displacement `(dx, dy)` means the content of the
//! current patch appears at `(x + dx, y + dy)` relative to the reference.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::ImagePoint;
use crate::raster::ImageBuffer;

pub const MIN_PATCH_SIZE: usize = 32;
/// Patches with intensity variance below this carry no phase information.
pub const MIN_PATCH_VARIANCE: f64 = 1e-8;
const SPECTRUM_FLOOR: f64 = 1e-12;
/// Low-pass support radius as a fraction of the Nyquist frequency.
const LOWPASS_FRACTION: f64 = 0.5;
/// Re-registrations with the window and spectrum following the estimate.
const REFINE_PASSES: usize = 2;

/// Estimated translation between two patches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Displacement {
    pub dx: f64,
    pub dy: f64,
    /// Correlation peak height in [0, 1].
    pub confidence: f64,
}

impl Displacement {
    pub fn new(dx: f64, dy: f64, confidence: f64) -> Self {
        Self { dx, dy, confidence }
    }

    pub fn magnitude(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

struct Tables {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    weight: Vec<f64>,
    weight_sum: f64,
}

impl Tables {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        let cutoff = 0.5 * LOWPASS_FRACTION;
        let freq = |i: usize| {
            let k = if i < n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            k / n as f64
        };
        let mut weight = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let r = freq(x).hypot(freq(y));
                if r < cutoff && (x, y) != (0, 0) {
                    weight[y * n + x] = 0.5 * (1.0 + (std::f64::consts::PI * r / cutoff).cos());
                }
            }
        }
        let weight_sum = weight.iter().sum();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            window,
            weight,
            weight_sum,
        }
    }
}

type TableCache = (FftPlanner<f64>, HashMap<usize, Arc<Tables>>);

thread_local! {
    static PLANNER: RefCell<TableCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn tables(n: usize) -> Arc<Tables> {
    PLANNER.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry(n)
            .or_insert_with(|| Arc::new(Tables::new(planner, n)))
            .clone()
    })
}

fn fft2(
    data: &mut [Complex<f64>],
    n: usize,
    fft: &Arc<dyn Fft<f64>>,
    scratch: &mut Vec<Complex<f64>>,
) {
    fft.process(data);
    // columns
    scratch.clear();
    scratch.resize(n, Complex::default());
    for x in 0..n {
        for y in 0..n {
            scratch[y] = data[y * n + x];
        }
        fft.process(scratch);
        for y in 0..n {
            data[y * n + x] = scratch[y];
        }
    }
}

fn check_patch(p: &ImageBuffer) -> Result<()> {
    let n = p.width();
    if p.height() != n || !n.is_power_of_two() || n < MIN_PATCH_SIZE {
        return Err(Error::SizeMismatch(format!(
            "patch must be square with a power-of-two side >= {MIN_PATCH_SIZE}, got {}x{}",
            p.width(),
            p.height()
        )));
    }
    Ok(())
}

/// `n` samples of a Hann window spanning `[start, start + len)`, zero
/// outside that interval.
fn hann_interval(n: usize, start: f64, len: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64 - start + 0.5;
            if (0.0..=len).contains(&x) {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * x / len).cos()
            } else {
                0.0
            }
        })
        .collect()
}

/// Spectrum of the patch after removing its window-weighted mean and
/// applying the separable window `wx` x `wy`. `None` if the window leaves
/// no energy.
fn windowed_spectrum(
    p: &ImageBuffer,
    wx: &[f64],
    wy: &[f64],
    t: &Tables,
    scratch: &mut Vec<Complex<f64>>,
) -> Option<Vec<Complex<f64>>> {
    let n = p.width();
    let (mut acc, mut norm) = (0.0, 0.0);
    for (i, &v) in p.pixels().iter().enumerate() {
        let w = wx[i % n] * wy[i / n];
        acc += w * v as f64;
        norm += w;
    }
    if norm <= 1e-9 {
        return None;
    }
    let mean = acc / norm;
    let mut data: Vec<Complex<f64>> = p
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex::new((v as f64 - mean) * wx[i % n] * wy[i / n], 0.0))
        .collect();
    fft2(&mut data, n, &t.forward, scratch);
    Some(data)
}

/// Quadratic-fit offset of the vertex from the center sample.
fn vertex_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-15 || denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Signed frequency of FFT bin `i` in cycles per sample.
fn frequency(i: usize, n: usize) -> f64 {
    if i < n / 2 {
        i as f64 / n as f64
    } else {
        (i as f64 - n as f64) / n as f64
    }
}

/// Correlation surface of `g` against `f`, with the cross spectrum
/// pre-shifted by `-frac` so a peak at `s` appears at `s - frac`; returns the
/// refined peak position (with `frac` added back) and its height.
fn correlate(
    f: &[Complex<f64>],
    mut g: Vec<Complex<f64>>,
    frac: (f64, f64),
    t: &Tables,
    scratch: &mut Vec<Complex<f64>>,
) -> (f64, f64, f64) {
    let n = t.window.len();
    let tau = 2.0 * std::f64::consts::PI;
    let ramp = |s: f64| -> Vec<Complex<f64>> {
        (0..n)
            .map(|i| Complex::from_polar(1.0, tau * frequency(i, n) * s))
            .collect()
    };
    let (rx, ry) = (ramp(frac.0), ramp(frac.1));
    for (idx, (gv, fv)) in g.iter_mut().zip(f).enumerate() {
        let w = t.weight[idx];
        *gv = if w > 0.0 {
            let cross = *gv * fv.conj();
            cross * (w / cross.norm().max(SPECTRUM_FLOOR)) * rx[idx % n] * ry[idx / n]
        } else {
            Complex::default()
        };
    }
    fft2(&mut g, n, &t.inverse, scratch);
    let scale = 1.0 / t.weight_sum;
    let surface: Vec<f64> = g.iter().map(|c| c.re * scale).collect();

    let (peak, &peak_val) = surface
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty surface");
    let (px, py) = (peak % n, peak / n);
    let at = |x: usize, y: usize| surface[(y % n) * n + (x % n)];
    let ox = vertex_offset(at(px + n - 1, py), peak_val, at(px + 1, py));
    let oy = vertex_offset(at(px, py + n - 1), peak_val, at(px, py + 1));
    let wrap = |i: usize| {
        if i >= n / 2 {
            i as f64 - n as f64
        } else {
            i as f64
        }
    };
    (wrap(px) + ox + frac.0, wrap(py) + oy + frac.1, peak_val)
}

/// Translation of `current` relative to `reference` with a confidence score.
///
/// After the first estimate, both patches are re-windowed over the content
/// they share and the cross spectrum is shifted so the peak lands near a
/// sample; this removes the pull toward zero that mismatched windows cause
/// and the bias of the quadratic fit away from sample positions.
pub fn poc_register(reference: &ImageBuffer, current: &ImageBuffer) -> Result<Displacement> {
    check_patch(reference)?;
    check_patch(current)?;
    if reference.width() != current.width() {
        return Err(Error::SizeMismatch(format!(
            "reference is {0}x{0}, current is {1}x{1}",
            reference.width(),
            current.width()
        )));
    }
    for p in [reference, current] {
        if p.mean_and_variance().1 < MIN_PATCH_VARIANCE {
            return Err(Error::DegeneratePatch);
        }
    }
    let n = reference.width();
    let t = tables(n);
    let mut scratch = Vec::with_capacity(n);
    let f = windowed_spectrum(reference, &t.window, &t.window, &t, &mut scratch)
        .ok_or(Error::DegeneratePatch)?;
    let g = windowed_spectrum(current, &t.window, &t.window, &t, &mut scratch)
        .ok_or(Error::DegeneratePatch)?;
    let (mut dx, mut dy, mut confidence) = correlate(&f, g, (0.0, 0.0), &t, &mut scratch);

    let limit = n as f64 / 4.0;
    for _ in 0..REFINE_PASSES {
        if dx.abs() > limit || dy.abs() > limit {
            break;
        }
        // windows over the shared content only, in both patches
        let (sx, sy) = ((-dx).max(0.0), (-dy).max(0.0));
        let (lx, ly) = (n as f64 - dx.abs(), n as f64 - dy.abs());
        let (rx, ry) = (hann_interval(n, sx, lx), hann_interval(n, sy, ly));
        let (cx, cy) = (hann_interval(n, sx + dx, lx), hann_interval(n, sy + dy, ly));
        let Some(f) = windowed_spectrum(reference, &rx, &ry, &t, &mut scratch) else {
            break;
        };
        let Some(g) = windowed_spectrum(current, &cx, &cy, &t, &mut scratch) else {
            break;
        };
        let frac = (dx - dx.round(), dy - dy.round());
        (dx, dy, confidence) = correlate(&f, g, frac, &t, &mut scratch);
    }
    Ok(Displacement {
        dx,
        dy,
        confidence: confidence.clamp(0.0, 1.0),
    })
}

/// Top-left pixel of the `size` window centered at the rounded `center`.
pub fn window_origin(center: ImagePoint, size: usize) -> (i64, i64) {
    let half = (size / 2) as i64;
    (
        center.u.round() as i64 - half,
        center.v.round() as i64 - half,
    )
}

/// Geometric center of the window [`crop_patch`] takes for `center`.
pub fn window_center(center: ImagePoint, size: usize) -> ImagePoint {
    let (x0, y0) = window_origin(center, size);
    let off = (size as f64 - 1.0) / 2.0;
    ImagePoint::new(x0 as f64 + off, y0 as f64 + off)
}

/// Crops the `size`x`size` window centered at the rounded `center`.
pub fn crop_patch(img: &ImageBuffer, center: ImagePoint, size: usize) -> Result<ImageBuffer> {
    let (x0, y0) = window_origin(center, size);
    img.window(x0, y0, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth pseudo-random periodic texture, exactly shiftable.
    pub(crate) fn periodic_texture(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let terms: Vec<(f64, f64, f64, f64)> = (0..300)
            .map(|_| {
                let kx = (next() * 41.0).floor() - 20.0;
                let ky = (next() * 41.0).floor() - 20.0;
                (kx, ky, next() * std::f64::consts::TAU, 0.5 + next())
            })
            .collect();
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let mut v = 0.0;
                for &(kx, ky, ph, a) in &terms {
                    v += a
                        * (std::f64::consts::TAU * (kx * x as f64 + ky * y as f64) / n as f64 + ph)
                            .cos();
                }
                out[y * n + x] = v;
            }
        }
        let (lo, hi) = out
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        out.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }

    fn buffer(n: usize, data: &[f64]) -> ImageBuffer {
        ImageBuffer::new(n, n, data.iter().map(|&v| v as f32).collect()).unwrap()
    }

    fn circular_shift(n: usize, data: &[f64], sx: i64, sy: i64) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                let src = ((y - sy).rem_euclid(n as i64) * n as i64 + (x - sx).rem_euclid(n as i64))
                    as usize;
                out[(y * n as i64 + x) as usize] = data[src];
            }
        }
        out
    }

    /// Broadband texture: every frequency carries energy.
    pub(crate) fn noise_texture(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed.wrapping_mul(0xD129_0A5B_93C5_1E2D) | 1;
        (0..n * n)
            .map(|_| {
                rng ^= rng << 13;
                rng ^= rng >> 7;
                rng ^= rng << 17;
                (rng >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn self_registration_is_zero_with_full_confidence() {
        let tex = noise_texture(128, 3);
        let d = poc_register(&buffer(128, &tex), &buffer(128, &tex)).unwrap();
        assert!(d.dx.abs() < 1e-9 && d.dy.abs() < 1e-9);
        assert!(d.confidence >= 0.99);
    }

    #[test]
    fn integer_circular_shift() {
        let tex = periodic_texture(128, 5);
        let shifted = circular_shift(128, &tex, 3, -2);
        let d = poc_register(&buffer(128, &tex), &buffer(128, &shifted)).unwrap();
        assert!((d.dx - 3.0).abs() < 0.01, "{d:?}");
        assert!((d.dy + 2.0).abs() < 0.01, "{d:?}");
    }

    /// Box-downsampled 8x supersampling of a ground texture translated by
    /// `(sx, sy)` pixels.
    fn supersampled(n: usize, seed: u64, sx: f64, sy: f64) -> Vec<f64> {
        let tex = crate::synth::GroundTexture::floor(seed);
        let mut out = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for j in 0..8 {
                    for i in 0..8 {
                        let u = x as f64 + (i as f64 + 0.5) / 8.0 - sx;
                        let v = y as f64 + (j as f64 + 0.5) / 8.0 - sy;
                        acc += tex.sample(2.0 * u, 2.0 * v);
                    }
                }
                out.push(acc / 64.0);
            }
        }
        out
    }

    #[test]
    fn subpixel_shift_of_supersampled_texture() {
        let a = supersampled(128, 21, 0.0, 0.0);
        let b = supersampled(128, 21, 0.5, -0.25);
        let d = poc_register(&buffer(128, &a), &buffer(128, &b)).unwrap();
        assert!((d.dx - 0.5).abs() < 0.05, "{d:?}");
        assert!((d.dy + 0.25).abs() < 0.05, "{d:?}");
    }

    #[test]
    fn rejects_bad_shapes_and_flat_patches() {
        let a = ImageBuffer::filled(64, 64, 0.5);
        let b = ImageBuffer::filled(32, 32, 0.5);
        assert!(matches!(poc_register(&a, &b), Err(Error::SizeMismatch(_))));
        let c = ImageBuffer::filled(48, 48, 0.5);
        assert!(matches!(poc_register(&c, &c), Err(Error::SizeMismatch(_))));
        let tex = buffer(64, &periodic_texture(64, 1));
        assert_eq!(poc_register(&a, &tex), Err(Error::DegeneratePatch));
    }

    #[test]
    fn crop_arithmetic() {
        let img = ImageBuffer::from_fn(800, 600, |x, y| ((x + 3 * y) % 256) as f32 / 255.0);
        let p = crop_patch(&img, ImagePoint::new(400.0, 300.0), 128).unwrap();
        assert_eq!(
            window_origin(ImagePoint::new(400.0, 300.0), 128),
            (336, 236)
        );
        for (y, x) in [(0usize, 0usize), (5, 127), (127, 64)] {
            assert_eq!(p.get(x, y), img.get(336 + x, 236 + y));
        }
        assert!(matches!(
            crop_patch(&img, ImagePoint::new(10.0, 10.0), 128),
            Err(Error::OutOfBounds { .. })
        ));
        let c = window_center(ImagePoint::new(400.2, 299.7), 128);
        assert_eq!((c.u, c.v), (399.5, 299.5));
    }
}
