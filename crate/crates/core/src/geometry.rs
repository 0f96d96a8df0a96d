//! Camera/ground coordinate conventions, perspective projection of ground
//! points, inverse perspective mapping of pixels, and planar rigid motion.
//!
//! Camera frame: x right, y down, z along the optical axis.
//! Ground frame G: origin at the foot of the perpendicular from the optical
//! center, y down (the plane is y = 0 and the camera sits at y = -h), z along
//! the optical axis projected onto the plane.
//!
//! The camera-to-ground rotation is `R = Rx(-pitch) * Rz(roll)` with the
//! usual right-handed elementary rotations. With this choice the optical
//! axis in G is `(0, sin pitch, cos pitch)`: pitch 0 looks at the horizon and
//! pitch pi/2 looks straight down. Roll turns the camera about its own
//! optical axis. Absolute yaw is not represented; G follows the camera.
//!
//! Angles are radians, lengths millimeters.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};

use crate::error::{Error, Result};

/// Rays closer than this (relative) to parallel with the ground are rejected.
const HORIZON_EPS: f64 = 1e-9;
/// Minimum camera-frame depth accepted by [`project`].
const DEPTH_EPS: f64 = 1e-9;

/// Pinhole intrinsics plus raster dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "intrinsics out of range: {self:?}"
            )))
        }
    }

    pub fn contains(&self, m: ImagePoint) -> bool {
        m.u >= 0.0
            && m.v >= 0.0
            && m.u <= (self.width - 1) as f64
            && m.v <= (self.height - 1) as f64
    }
}

/// Camera attitude and elevation relative to its ground frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    /// Downward tilt of the optical axis from ground-parallel.
    pub pitch: f64,
    /// Rotation about the optical axis.
    pub roll: f64,
    /// Optical center above the ground, mm.
    pub height: f64,
}

impl PoseParams {
    pub fn new(pitch: f64, roll: f64, height: f64) -> Result<Self> {
        let p = Self {
            pitch,
            roll,
            height,
        };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidParameter(format!("pose out of range: {p:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        use std::f64::consts::{FRAC_PI_2, PI};
        self.pitch > 0.0
            && self.pitch < PI
            && self.roll > -FRAC_PI_2
            && self.roll < FRAC_PI_2
            && self.height > 0.0
            && self.height.is_finite()
    }

    /// Rotation taking camera-frame vectors to ground-frame vectors.
    pub fn camera_to_ground(&self) -> Matrix3<f64> {
        let (st, ct) = self.pitch.sin_cos();
        let (sp, cp) = self.roll.sin_cos();
        Matrix3::new(cp, -sp, 0.0, ct * sp, ct * cp, st, -st * sp, -st * cp, ct)
    }
}

/// Planar rigid motion between consecutive ground frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionParams {
    pub tx: f64,
    pub tz: f64,
    /// Yaw change about the ground normal.
    pub yaw: f64,
}

impl MotionParams {
    pub fn new(tx: f64, tz: f64, yaw: f64) -> Self {
        Self { tx, tz, yaw }
    }

    pub fn travel(&self) -> f64 {
        self.tx.hypot(self.tz)
    }

    /// The motion that undoes `self` under [`motion_transform`].
    pub fn inverse(&self) -> Self {
        // p = Rot(-yaw) (p' + t)
        let (s, c) = (-self.yaw).sin_cos();
        let rx = c * self.tx + s * self.tz;
        let rz = -s * self.tx + c * self.tz;
        Self {
            tx: -rx,
            tz: -rz,
            yaw: -self.yaw,
        }
    }
}

/// A point on the ground plane (y = 0) of some ground frame, mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundPoint {
    pub x: f64,
    pub z: f64,
}

impl GroundPoint {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }
}

/// A continuous raster position, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }
}

/// Partial derivatives of [`project`]. Pose columns are (pitch, roll, height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectJacobian {
    pub wrt_pose: Matrix2x3<f64>,
    pub wrt_point: Matrix2<f64>,
}

/// Partial derivatives of [`backproject`]. Pose columns are (pitch, roll, height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackprojectJacobian {
    pub wrt_pose: Matrix2x3<f64>,
    pub wrt_pixel: Matrix2<f64>,
}

/// Partial derivatives of [`motion_transform`]. Motion columns are (tx, tz, yaw).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionJacobian {
    pub wrt_motion: Matrix2x3<f64>,
    pub wrt_point: Matrix2<f64>,
}

/// Image position of a ground point.
pub fn project(p: GroundPoint, pose: &PoseParams, k: &CameraIntrinsics) -> Result<ImagePoint> {
    project_with_jacobian(p, pose, k).map(|(m, _)| m)
}

pub fn project_with_jacobian(
    p: GroundPoint,
    pose: &PoseParams,
    k: &CameraIntrinsics,
) -> Result<(ImagePoint, ProjectJacobian)> {
    let (st, ct) = pose.pitch.sin_cos();
    let (sp, cp) = pose.roll.sin_cos();
    let h = pose.height;
    let (x, z) = (p.x, p.z);

    // camera coordinates of (x, h, z) - camera center
    let cx_ = cp * x + ct * sp * h - st * sp * z;
    let cy_ = -sp * x + ct * cp * h - st * cp * z;
    let cz_ = st * h + ct * z;
    if cz_ <= DEPTH_EPS * (h.abs() + x.abs() + z.abs()) {
        return Err(Error::NonPositiveDepth);
    }
    let iz = 1.0 / cz_;
    let m = ImagePoint::new(k.fx * cx_ * iz + k.cx, k.fy * cy_ * iz + k.cy);

    // d(camera coords)/d(pitch, roll, height, x, z), columns
    let d_pitch = [
        -st * sp * h - ct * sp * z,
        -st * cp * h - ct * cp * z,
        ct * h - st * z,
    ];
    let d_roll = [cy_, -cx_, 0.0];
    let d_height = [ct * sp, ct * cp, st];
    let d_x = [cp, -sp, 0.0];
    let d_z = [-st * sp, -st * cp, ct];

    let chain = |d: [f64; 3]| -> (f64, f64) {
        (
            k.fx * (d[0] * iz - cx_ * d[2] * iz * iz),
            k.fy * (d[1] * iz - cy_ * d[2] * iz * iz),
        )
    };
    let (a0, b0) = chain(d_pitch);
    let (a1, b1) = chain(d_roll);
    let (a2, b2) = chain(d_height);
    let (a3, b3) = chain(d_x);
    let (a4, b4) = chain(d_z);
    Ok((
        m,
        ProjectJacobian {
            wrt_pose: Matrix2x3::new(a0, a1, a2, b0, b1, b2),
            wrt_point: Matrix2::new(a3, a4, b3, b4),
        },
    ))
}

/// Ground point seen at pixel `m` (inverse perspective mapping).
pub fn backproject(m: ImagePoint, pose: &PoseParams, k: &CameraIntrinsics) -> Result<GroundPoint> {
    backproject_with_jacobian(m, pose, k).map(|(p, _)| p)
}

pub fn backproject_with_jacobian(
    m: ImagePoint,
    pose: &PoseParams,
    k: &CameraIntrinsics,
) -> Result<(GroundPoint, BackprojectJacobian)> {
    let (st, ct) = pose.pitch.sin_cos();
    let (sp, cp) = pose.roll.sin_cos();
    let h = pose.height;
    let a = (m.u - k.cx) / k.fx;
    let b = (m.v - k.cy) / k.fy;

    // viewing ray in ground coordinates
    let q = sp * a + cp * b;
    let gx = cp * a - sp * b;
    let gy = ct * q + st;
    let gz = -st * q + ct;
    let norm = (gx * gx + gy * gy + gz * gz).sqrt();
    if gy <= HORIZON_EPS * norm {
        return Err(Error::AboveHorizon);
    }
    let igy = 1.0 / gy;
    let p = GroundPoint::new(h * gx * igy, h * gz * igy);

    let chain = |dgx: f64, dgy: f64, dgz: f64| -> (f64, f64) {
        (
            h * (dgx * igy - gx * dgy * igy * igy),
            h * (dgz * igy - gz * dgy * igy * igy),
        )
    };
    let (x0, z0) = chain(0.0, gz, -gy);
    let (x1, z1) = chain(-q, ct * gx, -st * gx);
    let (x2, z2) = (gx * igy, gz * igy);
    let (xa, za) = chain(cp, ct * sp, -st * sp);
    let (xb, zb) = chain(-sp, ct * cp, -st * cp);
    Ok((
        p,
        BackprojectJacobian {
            wrt_pose: Matrix2x3::new(x0, x1, x2, z0, z1, z2),
            wrt_pixel: Matrix2::new(xa / k.fx, xb / k.fy, za / k.fx, zb / k.fy),
        },
    ))
}

/// Expresses a point of the previous ground frame in the current one: rotate
/// by `yaw` about the ground normal, then translate by `(-tx, -tz)`.
pub fn motion_transform(p: GroundPoint, motion: &MotionParams) -> GroundPoint {
    let (s, c) = motion.yaw.sin_cos();
    GroundPoint::new(
        c * p.x + s * p.z - motion.tx,
        -s * p.x + c * p.z - motion.tz,
    )
}

pub fn motion_transform_with_jacobian(
    p: GroundPoint,
    motion: &MotionParams,
) -> (GroundPoint, MotionJacobian) {
    let (s, c) = motion.yaw.sin_cos();
    let out = motion_transform(p, motion);
    let jac = MotionJacobian {
        wrt_motion: Matrix2x3::new(-1.0, 0.0, -s * p.x + c * p.z, 0.0, -1.0, -c * p.x - s * p.z),
        wrt_point: Matrix2::new(c, s, -s, c),
    };
    (out, jac)
}

/// Image row of the horizon at column `u` (None when the camera looks up
/// far enough that the horizon is undefined).
pub fn horizon_row(u: f64, pose: &PoseParams, k: &CameraIntrinsics) -> Option<f64> {
    // gy = cos(pitch) * (sin(roll) a + cos(roll) b) + sin(pitch) = 0
    let (st, ct) = pose.pitch.sin_cos();
    let (sp, cp) = pose.roll.sin_cos();
    if (ct * cp).abs() < 1e-15 {
        return None;
    }
    let a = (u - k.cx) / k.fx;
    let b = (-st / ct - sp * a) / cp;
    Some(b * k.fy + k.cy)
}
