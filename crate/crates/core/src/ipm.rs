//! Virtual inverse perspective mapping: a metric bird's-eye raster of the
//! ground induced by a pose estimate.
//!
//! Raster column grows with ground x, raster row grows toward the camera
//! (decreasing ground z), so far ground appears at the top.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    backproject, project, CameraIntrinsics, GroundPoint, ImagePoint, PoseParams,
};
use crate::raster::{ImageBuffer, Mask};

/// Rasters above this many pixels are refused.
pub const MAX_IPM_PIXELS: usize = 16 << 20;

/// Geometry of a virtual IPM raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmPlaneSpec {
    /// Millimeters per raster pixel.
    pub scale: f64,
    /// Ground point of raster pixel (0, 0).
    pub origin: GroundPoint,
    /// Rotation of the raster axes against the ground axes, radians,
    /// counter-clockwise seen from above with x right and z up.
    pub heading: f64,
    pub width: usize,
    pub height: usize,
    /// Pose estimate that induced this plane.
    pub pose_used: PoseParams,
}

impl IpmPlaneSpec {
    pub fn ground_of(&self, px: ImagePoint) -> GroundPoint {
        let (s, c) = self.heading.sin_cos();
        let (a, b) = (px.u * self.scale, -px.v * self.scale);
        GroundPoint::new(self.origin.x + c * a - s * b, self.origin.z + s * a + c * b)
    }

    pub fn pixel_of(&self, g: GroundPoint) -> ImagePoint {
        let (s, c) = self.heading.sin_cos();
        let (dx, dz) = (g.x - self.origin.x, g.z - self.origin.z);
        ImagePoint::new(
            (c * dx + s * dz) / self.scale,
            -(-s * dx + c * dz) / self.scale,
        )
    }

    /// Maps a camera pixel onto this raster.
    pub fn from_image(&self, m: ImagePoint, k: &CameraIntrinsics) -> Result<ImagePoint> {
        Ok(self.pixel_of(backproject(m, &self.pose_used, k)?))
    }

    /// Maps a raster pixel back into the camera image.
    pub fn to_image(&self, px: ImagePoint, k: &CameraIntrinsics) -> Result<ImagePoint> {
        project(self.ground_of(px), &self.pose_used, k)
    }
}

/// Raster covering the back-projected `points` under `pose`, padded by
/// `padding` pixels on every side.
pub fn plan_ipm(
    points: &[ImagePoint],
    pose: &PoseParams,
    k: &CameraIntrinsics,
    scale: f64,
    padding: usize,
) -> Result<IpmPlaneSpec> {
    plan_ipm_rotated(points, pose, k, scale, padding, 0.0)
}

/// Like [`plan_ipm`] with the raster axes turned by `heading`.
pub fn plan_ipm_rotated(
    points: &[ImagePoint],
    pose: &PoseParams,
    k: &CameraIntrinsics,
    scale: f64,
    padding: usize,
    heading: f64,
) -> Result<IpmPlaneSpec> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "IPM scale must be positive, got {scale}"
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter(
            "no points to plan an IPM plane".into(),
        ));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (s, c) = heading.sin_cos();
    for &m in points {
        let g = backproject(m, pose, k)?;
        let (a, b) = (c * g.x + s * g.z, -s * g.x + c * g.z);
        x_min = x_min.min(a);
        x_max = x_max.max(a);
        z_min = z_min.min(b);
        z_max = z_max.max(b);
    }
    let pad = padding as f64 * scale;
    let (a0, b0) = (x_min - pad, z_max + pad);
    let origin = GroundPoint::new(c * a0 - s * b0, s * a0 + c * b0);
    let width = ((x_max - x_min + 2.0 * pad) / scale).ceil() as usize + 1;
    let height = ((z_max - z_min + 2.0 * pad) / scale).ceil() as usize + 1;
    if width.saturating_mul(height) > MAX_IPM_PIXELS {
        return Err(Error::IpmTooLarge { width, height });
    }
    Ok(IpmPlaneSpec {
        scale,
        origin,
        heading,
        width,
        height,
        pose_used: *pose,
    })
}

/// A warped raster and which of its pixels saw the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmImage {
    pub image: ImageBuffer,
    pub valid: Mask,
}

/// Resamples `img` onto the IPM raster with bilinear interpolation.
/// Pixels that project outside the source are zero and masked out.
pub fn warp_to_ipm(img: &ImageBuffer, spec: &IpmPlaneSpec, k: &CameraIntrinsics) -> IpmImage {
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..spec.height)
        .into_par_iter()
        .map(|y| {
            let mut vals = Vec::with_capacity(spec.width);
            let mut ok = Vec::with_capacity(spec.width);
            for x in 0..spec.width {
                let g = spec.ground_of(ImagePoint::new(x as f64, y as f64));
                let sample = project(g, &spec.pose_used, k)
                    .ok()
                    .and_then(|m| img.sample(m.u, m.v));
                vals.push(sample.unwrap_or(0.0));
                ok.push(sample.is_some());
            }
            (vals, ok)
        })
        .collect();
    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    let mut bits = Vec::with_capacity(spec.width * spec.height);
    for (v, b) in rows {
        pixels.extend(v);
        bits.extend(b);
    }
    IpmImage {
        image: ImageBuffer::from_raw(spec.width, spec.height, pixels),
        valid: Mask::new(spec.width, spec.height, bits).expect("row lengths match"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MotionParams;
    use crate::patch_grid::make_grid;
    use crate::synth::{motion_isometry, render_view, GroundTexture, View};

    fn k600() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 400.0, 300.0, 800, 600).unwrap()
    }

    #[test]
    fn bounding_box_matches_per_point_backprojection() {
        let k = k600();
        let grid = make_grid(&k, 3, 3, 64.0).unwrap();
        let pose = PoseParams::new(std::f64::consts::FRAC_PI_3, 0.0, 700.0).unwrap();
        let spec = plan_ipm(grid.points(), &pose, &k, 2.0, 128).unwrap();
        let ground: Vec<_> = grid
            .points()
            .iter()
            .map(|&m| backproject(m, &pose, &k).unwrap())
            .collect();
        let x_min = ground.iter().map(|g| g.x).fold(f64::INFINITY, f64::min);
        let z_max = ground.iter().map(|g| g.z).fold(f64::NEG_INFINITY, f64::max);
        assert!((spec.origin.x - (x_min - 256.0)).abs() < 1e-9);
        assert!((spec.origin.z - (z_max + 256.0)).abs() < 1e-9);
        // independently computed footprint of the 3x3 grid
        let z_min = ground.iter().map(|g| g.z).fold(f64::INFINITY, f64::min);
        let x_max = ground.iter().map(|g| g.x).fold(f64::NEG_INFINITY, f64::max);
        assert!((x_min + 585.635143402974).abs() < 1e-9);
        assert!((x_max - 585.635143402974).abs() < 1e-9);
        assert!((z_min - 104.973342632858).abs() < 1e-9);
        assert!((z_max - 879.118518283836).abs() < 1e-9);
        for g in &ground {
            let p = spec.pixel_of(*g);
            assert!(p.u >= 128.0 - 1e-9 && p.u <= spec.width as f64 - 128.0);
            assert!(p.v >= 128.0 - 1e-9 && p.v <= spec.height as f64 - 128.0);
        }
    }

    #[test]
    fn perspective_footprint_is_trapezoidal() {
        let k = k600();
        let grid = make_grid(&k, 3, 3, 64.0).unwrap();
        let pose = PoseParams::new(std::f64::consts::FRAC_PI_3, 0.0, 700.0).unwrap();
        let p = grid.points();
        let width_of = |a: ImagePoint, b: ImagePoint| {
            backproject(a, &pose, &k)
                .unwrap()
                .distance(&backproject(b, &pose, &k).unwrap())
        };
        assert!(width_of(p[0], p[2]) > 1.5 * width_of(p[6], p[8]));

        let nadir = PoseParams::new(1.4, 0.0, 700.0).unwrap();
        let far = backproject(p[0], &nadir, &k)
            .unwrap()
            .distance(&backproject(p[2], &nadir, &k).unwrap());
        let near = backproject(p[6], &nadir, &k)
            .unwrap()
            .distance(&backproject(p[8], &nadir, &k).unwrap());
        assert!(far / near < 1.25);
        let spec = plan_ipm(p, &nadir, &k, 2.0, 0).unwrap();
        let aspect = spec.width as f64 / spec.height as f64;
        assert!((aspect - 672.0 / 472.0).abs() < 0.25, "aspect {aspect}");
    }

    #[test]
    fn raster_mapping_is_metric() {
        let pose = PoseParams::new(1.0, 0.02, 700.0).unwrap();
        let spec = IpmPlaneSpec {
            scale: 2.0,
            origin: GroundPoint::new(-500.0, 1500.0),
            heading: 0.0,
            width: 600,
            height: 700,
            pose_used: pose,
        };
        let a = GroundPoint::new(10.0, 400.0);
        let b = GroundPoint::new(-130.0, 777.0);
        let (pa, pb) = (spec.pixel_of(a), spec.pixel_of(b));
        let d_px = (pa.u - pb.u).hypot(pa.v - pb.v);
        assert!((d_px - a.distance(&b) / 2.0).abs() < 1e-9);
        let back = spec.ground_of(pa);
        assert!((back.x - a.x).abs() < 1e-12 && (back.z - a.z).abs() < 1e-12);
    }

    #[test]
    fn constant_source_gives_constant_ipm() {
        let k = k600();
        let img = ImageBuffer::filled(800, 600, 0.3);
        let pose = PoseParams::new(1.0, 0.0, 700.0).unwrap();
        let grid = make_grid(&k, 3, 3, 64.0).unwrap();
        let spec = plan_ipm(grid.points(), &pose, &k, 4.0, 32).unwrap();
        let ipm = warp_to_ipm(&img, &spec, &k);
        let mut seen = 0;
        for y in 0..spec.height {
            for x in 0..spec.width {
                if ipm.valid.get(x, y) {
                    assert!((ipm.image.get(x, y) - 0.3).abs() < 1e-6);
                    seen += 1;
                } else {
                    assert_eq!(ipm.image.get(x, y), 0.0);
                }
            }
        }
        assert!(seen > 0 && seen < spec.width * spec.height);
    }

    #[test]
    fn horizon_points_propagate() {
        let k = k600();
        let pose = PoseParams::new(0.2, 0.0, 700.0).unwrap();
        assert_eq!(
            plan_ipm(&[ImagePoint::new(400.0, 0.0)], &pose, &k, 2.0, 0),
            Err(Error::AboveHorizon)
        );
    }

    fn rendered(
        texture: &GroundTexture,
        view: &View,
        k: &CameraIntrinsics,
    ) -> (IpmPlaneSpec, IpmImage) {
        let img = render_view(texture, view, k, 0.0, 0);
        let grid = make_grid(k, 5, 5, 100.0).unwrap();
        let spec = plan_ipm(grid.points(), &view.pose, k, 2.0, 0).unwrap();
        let ipm = warp_to_ipm(&img, &spec, k);
        (spec, ipm)
    }

    #[test]
    fn warp_recovers_ground_texture() {
        let k = k600();
        let texture = GroundTexture::floor(5);
        let view = View::at_origin(PoseParams::new(1.3, 0.03, 700.0).unwrap());
        let (spec, ipm) = rendered(&texture, &view, &k);
        let (mut ss, mut n) = (0.0, 0usize);
        for y in 0..spec.height {
            for x in 0..spec.width {
                if ipm.valid.get(x, y) {
                    let g = spec.ground_of(ImagePoint::new(x as f64, y as f64));
                    let e = ipm.image.get(x, y) as f64 - texture.sample(g.x, g.z);
                    ss += e * e;
                    n += 1;
                }
            }
        }
        let rms = (ss / n as f64).sqrt();
        assert!(n > 10_000);
        assert!(rms < 0.02, "rms {rms}");
    }

    #[test]
    fn painted_line_stays_straight() {
        let k = k600();
        let texture = GroundTexture::stripe(30.0, 0.4);
        // stripe rotated and offset on the ground so it runs obliquely through the image
        let view = View {
            pose: PoseParams::new(1.0, 0.05, 700.0).unwrap(),
            world_to_ground: motion_isometry(&MotionParams::new(-100.0, 0.0, 0.3)).inverse(),
        };
        let (spec, ipm) = rendered(&texture, &view, &k);
        let mut samples = Vec::new();
        for y in 0..spec.height {
            let row: Vec<(f64, f64)> = (0..spec.width)
                .filter(|&x| ipm.valid.get(x, y))
                .map(|x| (x as f64, (ipm.image.get(x, y) as f64 - 0.1).max(0.0)))
                .collect();
            let mass: f64 = row.iter().map(|r| r.1).sum();
            let fully_inside = row.len() == spec.width;
            if fully_inside && mass > 1.0 {
                samples.push((y as f64, row.iter().map(|r| r.0 * r.1).sum::<f64>() / mass));
            }
        }
        assert!(samples.len() > 100);
        let n = samples.len() as f64;
        let (my, mx) = (
            samples.iter().map(|s| s.0).sum::<f64>() / n,
            samples.iter().map(|s| s.1).sum::<f64>() / n,
        );
        let slope = samples.iter().map(|s| (s.0 - my) * (s.1 - mx)).sum::<f64>()
            / samples.iter().map(|s| (s.0 - my).powi(2)).sum::<f64>();
        assert!(slope.abs() > 0.1, "line should be oblique, slope {slope}");
        let worst = samples
            .iter()
            .map(|s| (s.1 - mx - slope * (s.0 - my)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.5, "worst deviation {worst}");
    }
}
