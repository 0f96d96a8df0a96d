//! Single-channel rasters.

use crate::error::{Error, Result};

/// Row-major grayscale raster with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::SizeMismatch(format!(
                "{width}x{height} raster needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds a raster from a per-pixel function, clamping into [0, 1].
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; `None` outside the raster.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> Option<f32> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if u > max_u || v > max_v {
            return None;
        }
        let x0 = (u.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(self.height.saturating_sub(2));
        let fx = (u - x0 as f64) as f32;
        let fy = (v - y0 as f64) as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        Some(top + (bottom - top) * fy)
    }

    /// Copies the `size`x`size` window whose top-left pixel is `(x0, y0)`.
    pub fn window(&self, x0: i64, y0: i64, size: usize) -> Result<ImageBuffer> {
        if x0 < 0 || y0 < 0 || x0 as usize + size > self.width || y0 as usize + size > self.height {
            return Err(Error::OutOfBounds {
                x: x0,
                y: y0,
                size,
                width: self.width,
                height: self.height,
            });
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        let mut pixels = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + size]);
        }
        Ok(ImageBuffer::from_raw(size, size, pixels))
    }

    /// Box-filtered downsampling by an integer factor (partial blocks dropped).
    pub fn downsample(&self, factor: usize) -> ImageBuffer {
        assert!(factor >= 1);
        let w = self.width / factor;
        let h = self.height / factor;
        let norm = 1.0 / (factor * factor) as f32;
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for dy in 0..factor {
                    let row = (y * factor + dy) * self.width + x * factor;
                    acc += self.pixels[row..row + factor].iter().sum::<f32>();
                }
                pixels.push(acc * norm);
            }
        }
        ImageBuffer::from_raw(w, h, pixels)
    }

    pub fn mean_and_variance(&self) -> (f64, f64) {
        let n = self.pixels.len().max(1) as f64;
        let mean = self.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = self
            .pixels
            .iter()
            .map(|&p| {
                let d = p as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var)
    }
}

/// Binary raster; `true` marks usable pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width * height != bits.len() {
            return Err(Error::SizeMismatch(format!(
                "{width}x{height} mask needs {} entries, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Value at the nearest pixel; `false` outside.
    pub fn at(&self, u: f64, v: f64) -> bool {
        let (x, y) = (u.round(), v.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return false;
        }
        self.get(x as usize, y as usize)
    }

    /// Fraction of set pixels inside the window with top-left `(x0, y0)`.
    pub fn window_fraction(&self, x0: i64, y0: i64, size: usize) -> f64 {
        let mut set = 0usize;
        for y in y0..y0 + size as i64 {
            for x in x0..x0 + size as i64 {
                if x >= 0
                    && y >= 0
                    && (x as usize) < self.width
                    && (y as usize) < self.height
                    && self.get(x as usize, y as usize)
                {
                    set += 1;
                }
            }
        }
        set as f64 / (size * size) as f64
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rasters() {
        assert!(ImageBuffer::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn bilinear_reproduces_linear_ramps() {
        let img = ImageBuffer::from_fn(8, 6, |x, y| (x as f32 + 2.0 * y as f32) / 32.0);
        let v = img.sample(2.25, 3.5).unwrap();
        assert!((v - (2.25 + 7.0) / 32.0).abs() < 1e-6);
        assert!(img.sample(7.0, 5.0).is_some());
        assert!(img.sample(7.01, 0.0).is_none());
        assert!(img.sample(-0.01, 0.0).is_none());
    }

    #[test]
    fn window_fraction_counts_outside_as_unset() {
        let m = Mask::full(4, 4);
        assert_eq!(m.window_fraction(0, 0, 4), 1.0);
        assert_eq!(m.window_fraction(2, 0, 4), 0.5);
    }
}
