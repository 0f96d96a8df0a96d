//! Frame discovery and grayscale image I/O.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use groundpose::{ImageBuffer, Mask};
use image::{GrayImage, ImageBuffer as RasterOf, Luma};

const EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

fn is_frame(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Frames of a sequence in order, keeping every `stride`-th one.
///
/// `input` is either a directory (image files sorted by name) or a text
/// file naming one frame per line, relative to the list's directory.
pub fn list_frames(input: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    if stride == 0 {
        bail!("frame stride must be at least 1");
    }
    let all: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("cannot read frame directory {}", input.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .with_context(|| format!("cannot read frame directory {}", input.display()))?;
        v.retain(|p| p.is_file() && is_frame(p));
        v.sort();
        v
    } else {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("cannot read input {}", input.display()))?;
        let base = input.parent().unwrap_or(Path::new(""));
        let v: Vec<PathBuf> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect();
        if let Some(missing) = v.iter().find(|p| !p.is_file()) {
            bail!("frame file not found: {}", missing.display());
        }
        v
    };
    let frames: Vec<PathBuf> = all.into_iter().step_by(stride).collect();
    if frames.len() < 2 {
        bail!(
            "need at least two frames in {}, found {}",
            input.display(),
            frames.len()
        );
    }
    Ok(frames)
}

/// Loads any supported image as luminance in [0, 1].
pub fn load_gray(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).with_context(|| format!("cannot read frame {}", path.display()))?;
    let luma = img.to_luma32f();
    let (w, h) = luma.dimensions();
    ImageBuffer::new(w as usize, h as usize, luma.into_raw())
        .with_context(|| format!("unusable frame {}", path.display()))
}

/// Writes a 16-bit grayscale PNG.
pub fn save_gray16(path: &Path, img: &ImageBuffer) -> Result<()> {
    let data: Vec<u16> = img
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let raster: RasterOf<Luma<u16>, Vec<u16>> =
        RasterOf::from_raw(img.width() as u32, img.height() as u32, data)
            .expect("buffer matches dimensions");
    raster
        .save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_gray8(path: &Path, img: &ImageBuffer) -> Result<()> {
    let data: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let raster = GrayImage::from_raw(img.width() as u32, img.height() as u32, data)
        .expect("buffer matches dimensions");
    raster
        .save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = load_gray(path)?;
    let bits = img.pixels().iter().map(|&v| v > 0.0).collect();
    Mask::new(img.width(), img.height(), bits)
        .with_context(|| format!("unusable mask {}", path.display()))
}
