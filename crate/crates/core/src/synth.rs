//! Synthetic ground scenes with exactly known pose and motion.
//!
//! Everything here is computed through ground-to-image homographies built
//! with nalgebra, deliberately independent of the scalar code in
//! [`crate::geometry`], so the renderer and [`exact_field`] can serve as an
//! oracle for the estimator.

use nalgebra::{Isometry2, Matrix3, Point2, Rotation2, Rotation3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::estimator::{DisplacementField, FieldEntry, FieldPlane};
use crate::geometry::{CameraIntrinsics, ImagePoint, MotionParams, PoseParams};
use crate::ipm::IpmPlaneSpec;
use crate::raster::ImageBuffer;
use crate::registration::Displacement;

/// Intensity of pixels whose ray misses the ground.
pub const SKY_LEVEL: f32 = 0.5;
/// Supersampling factor per axis.
pub const SUPERSAMPLING: usize = 4;

const OCTAVES: usize = 4;
const PERSISTENCE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureKind {
    /// Multi-octave value noise.
    ValueNoise,
    /// One bright stripe along the world z axis on a flat background.
    Stripe { width: f64 },
}

/// Procedural ground intensity in [0, 1] over world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTexture {
    pub kind: TextureKind,
    pub seed: u64,
    /// Lattice spacing of the second octave, mm.
    pub feature_scale: f64,
    /// Peak deviation from mid-gray.
    pub amplitude: f64,
}

impl GroundTexture {
    pub fn value_noise(seed: u64, feature_scale: f64, amplitude: f64) -> Self {
        Self {
            kind: TextureKind::ValueNoise,
            seed,
            feature_scale,
            amplitude,
        }
    }

    /// Default rich floor texture (40 mm features).
    pub fn floor(seed: u64) -> Self {
        Self::value_noise(seed, 40.0, 0.35)
    }

    /// Weak, corridor-like texture.
    pub fn low_contrast(seed: u64) -> Self {
        Self::value_noise(seed, 40.0, 0.05)
    }

    pub fn stripe(width: f64, amplitude: f64) -> Self {
        Self {
            kind: TextureKind::Stripe { width },
            seed: 0,
            feature_scale: width,
            amplitude,
        }
    }

    pub fn sample(&self, x: f64, z: f64) -> f64 {
        let v = match self.kind {
            TextureKind::ValueNoise => {
                let mut acc = 0.0;
                let mut norm = 0.0;
                let mut amp = 1.0;
                let mut spacing = 2.0 * self.feature_scale;
                for octave in 0..OCTAVES {
                    acc += amp * value_noise(x / spacing, z / spacing, self.seed, octave as u64);
                    norm += amp;
                    amp *= PERSISTENCE;
                    spacing *= 0.5;
                }
                // the octave sum rarely leaves +-0.6 of its nominal range
                0.5 + self.amplitude * (acc / norm) / 0.6
            }
            TextureKind::Stripe { width } => {
                if x.abs() <= 0.5 * width {
                    0.5 + self.amplitude
                } else {
                    0.5 - self.amplitude
                }
            }
        };
        v.clamp(0.0, 1.0)
    }
}

#[inline]
fn hash(ix: i64, iz: i64, seed: u64, octave: u64) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iz as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9)
        ^ octave.wrapping_mul(0x27D4_EB2F_1656_67C5);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(x: f64, z: f64, seed: u64, octave: u64) -> f64 {
    let (fx, fz) = (x.floor(), z.floor());
    let (ix, iz) = (fx as i64, fz as i64);
    let (tx, tz) = (fade(x - fx), fade(z - fz));
    let a = hash(ix, iz, seed, octave);
    let b = hash(ix + 1, iz, seed, octave);
    let c = hash(ix, iz + 1, seed, octave);
    let d = hash(ix + 1, iz + 1, seed, octave);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * tz
}

/// Ground (x, z, 1) to homogeneous pixel for a camera with the given pose.
pub fn ground_to_image_homography(pose: &PoseParams, k: &CameraIntrinsics) -> Matrix3<f64> {
    let r = Rotation3::from_axis_angle(&Vector3::x_axis(), -pose.pitch)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), pose.roll);
    let rt = r.inverse();
    let c0 = rt * Vector3::x();
    let c1 = rt * Vector3::z();
    let c2 = rt * Vector3::y() * pose.height;
    let kk = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
    kk * Matrix3::from_columns(&[c0, c1, c2])
}

/// A camera view of the ground: pose plus the planar transform taking world
/// (texture) coordinates into this frame's ground coordinates.
#[derive(Debug, Clone)]
pub struct View {
    pub pose: PoseParams,
    pub world_to_ground: Isometry2<f64>,
}

impl View {
    pub fn at_origin(pose: PoseParams) -> Self {
        Self {
            pose,
            world_to_ground: Isometry2::identity(),
        }
    }
}

/// Planar isometry equivalent of a motion: ground-frame coordinates of the
/// previous frame into the current frame.
pub fn motion_isometry(m: &MotionParams) -> Isometry2<f64> {
    Isometry2::new(Vector2::new(-m.tx, -m.tz), -m.yaw)
}

struct Mapper {
    to_image: Matrix3<f64>,
    to_ground: Matrix3<f64>,
}

impl Mapper {
    fn new(pose: &PoseParams, k: &CameraIntrinsics) -> Self {
        let to_image = ground_to_image_homography(pose, k);
        let to_ground = to_image
            .try_inverse()
            .expect("ground homography is invertible");
        Self {
            to_image,
            to_ground,
        }
    }

    fn image(&self, g: Point2<f64>) -> Option<Point2<f64>> {
        let m = self.to_image * Vector3::new(g.x, g.y, 1.0);
        (m.z > 1e-9).then(|| Point2::new(m.x / m.z, m.y / m.z))
    }

    fn ground(&self, u: f64, v: f64) -> Option<Point2<f64>> {
        let g = self.to_ground * Vector3::new(u, v, 1.0);
        if g.z.abs() < 1e-15 {
            return None;
        }
        let p = Point2::new(g.x / g.z, g.y / g.z);
        // depth of the recovered point must be positive
        let depth = (self.to_image * Vector3::new(p.x, p.y, 1.0)).z;
        (depth > 1e-9).then_some(p)
    }
}

/// Renders one view with 4x4 supersampling and i.i.d. Gaussian noise.
pub fn render_view(
    texture: &GroundTexture,
    view: &View,
    k: &CameraIntrinsics,
    noise_sigma: f64,
    noise_seed: u64,
) -> ImageBuffer {
    let mapper = Mapper::new(&view.pose, k);
    let ground_to_world = view.world_to_ground.inverse();
    let n = SUPERSAMPLING;
    let offsets: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect();
    let norm = 1.0 / (n * n) as f64;
    let rows: Vec<Vec<f32>> = (0..k.height)
        .into_par_iter()
        .map(|y| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                noise_seed ^ (y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
            (0..k.width)
                .map(|x| {
                    let mut acc = 0.0;
                    for dv in &offsets {
                        for du in &offsets {
                            acc += match mapper.ground(x as f64 + du, y as f64 + dv) {
                                Some(g) => {
                                    let w = ground_to_world * g;
                                    texture.sample(w.x, w.y)
                                }
                                None => SKY_LEVEL as f64,
                            };
                        }
                    }
                    let mut v = acc * norm;
                    if noise_sigma > 0.0 {
                        v += normal.sample(&mut rng);
                    }
                    v.clamp(0.0, 1.0) as f32
                })
                .collect()
        })
        .collect();
    ImageBuffer::new(k.width, k.height, rows.concat()).expect("rendered intensities are clamped")
}

/// Exactly known two-frame scene.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub pose_prev: PoseParams,
    pub pose_cur: PoseParams,
    pub motion: MotionParams,
    pub intrinsics: CameraIntrinsics,
    pub texture: GroundTexture,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn prev_view(&self) -> View {
        View::at_origin(self.pose_prev)
    }

    pub fn cur_view(&self) -> View {
        View {
            pose: self.pose_cur,
            world_to_ground: motion_isometry(&self.motion),
        }
    }
}

/// Renders the previous and current frames of a scenario.
pub fn render(scenario: &Scenario) -> (ImageBuffer, ImageBuffer) {
    let k = &scenario.intrinsics;
    let prev = render_view(
        &scenario.texture,
        &scenario.prev_view(),
        k,
        scenario.noise_sigma,
        scenario.seed,
    );
    let cur = render_view(
        &scenario.texture,
        &scenario.cur_view(),
        k,
        scenario.noise_sigma,
        scenario.seed.wrapping_add(0x5851_F42D_4C95_7F2D),
    );
    (prev, cur)
}

/// Which plane an exact field is expressed on.
#[derive(Debug, Clone)]
pub enum PlaneRequest {
    Image,
    Ipm {
        prev: IpmPlaneSpec,
        cur: IpmPlaneSpec,
    },
}

fn raster_to_ground(spec: &IpmPlaneSpec, a: ImagePoint) -> Point2<f64> {
    let axes = Rotation2::new(spec.heading);
    Point2::new(spec.origin.x, spec.origin.z) + axes * Vector2::new(a.u, -a.v) * spec.scale
}

fn ground_to_raster(spec: &IpmPlaneSpec, g: Point2<f64>) -> ImagePoint {
    let axes = Rotation2::new(spec.heading);
    let local = axes.inverse() * (g - Point2::new(spec.origin.x, spec.origin.z)) / spec.scale;
    ImagePoint::new(local.x, -local.y)
}

/// Noise-free displacement field of `scenario` at `anchors` (raster
/// coordinates of the requested plane). Anchors whose chain leaves the
/// valid domain are omitted.
pub fn exact_field(
    scenario: &Scenario,
    anchors: &[ImagePoint],
    plane: &PlaneRequest,
) -> DisplacementField {
    let k = &scenario.intrinsics;
    let prev = Mapper::new(&scenario.pose_prev, k);
    let cur = Mapper::new(&scenario.pose_cur, k);
    let motion = motion_isometry(&scenario.motion);

    let image_chain = |m: Point2<f64>| -> Option<Point2<f64>> {
        let g = prev.ground(m.x, m.y)?;
        cur.image(motion * g)
    };

    let entries = anchors
        .iter()
        .filter_map(|&a| {
            let target = match plane {
                PlaneRequest::Image => {
                    let mc = image_chain(Point2::new(a.u, a.v))?;
                    ImagePoint::new(mc.x, mc.y)
                }
                PlaneRequest::Ipm { prev: sp, cur: sc } => {
                    let est_prev = Mapper::new(&sp.pose_used, k);
                    let est_cur = Mapper::new(&sc.pose_used, k);
                    let mp = est_prev.image(raster_to_ground(sp, a))?;
                    let mc = image_chain(mp)?;
                    let gc = est_cur.ground(mc.x, mc.y)?;
                    ground_to_raster(sc, gc)
                }
            };
            Some(FieldEntry::new(
                a,
                Displacement::new(target.u - a.u, target.v - a.v, 1.0),
            ))
        })
        .collect();
    let plane = match plane {
        PlaneRequest::Image => FieldPlane::Image,
        PlaneRequest::Ipm { prev, cur } => FieldPlane::Ipm {
            prev: *prev,
            cur: *cur,
        },
    };
    DisplacementField::new(entries, plane)
}
