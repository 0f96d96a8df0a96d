//! Reprojection residuals and their analytic Jacobians.
//!
//! Image plane: `m_c - m_p - d` with
//! `m_c = project(motion(backproject(m_p; prev)); cur)`.
//!
//! IPM plane: the anchor lives on the previous frame's virtual raster. It is
//! taken to the image with the pose estimate that built that raster, to the
//! ground with the candidate previous pose, moved, imaged with the candidate
//! current pose, and finally mapped onto the current frame's virtual raster
//! with the estimate that built it.

use nalgebra::{Matrix2, SMatrix, Vector2};

use super::{DisplacementField, FieldEntry, FieldPlane, ParamVector};
use crate::error::Result;
use crate::geometry::{
    backproject_with_jacobian, motion_transform_with_jacobian, project_with_jacobian,
    CameraIntrinsics, ImagePoint,
};
use crate::ipm::IpmPlaneSpec;

pub type Jacobian = SMatrix<f64, 2, 7>;

fn image_chain(
    m_p: ImagePoint,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<(ImagePoint, Jacobian)> {
    let (g_p, jb) = backproject_with_jacobian(m_p, &params.prev_pose(), k)?;
    let (g_c, jm) = motion_transform_with_jacobian(g_p, &params.motion());
    let (m_c, jp) = project_with_jacobian(g_c, &params.cur_pose(), k)?;

    let through = jp.wrt_point * jm.wrt_point;
    let mut j = Jacobian::zeros();
    j.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&(through * jb.wrt_pose.fixed_view::<2, 2>(0, 0)));
    j.fixed_view_mut::<2, 2>(0, 2)
        .copy_from(&jp.wrt_pose.fixed_view::<2, 2>(0, 0));
    j.fixed_view_mut::<2, 3>(0, 4)
        .copy_from(&(jp.wrt_point * jm.wrt_motion));
    Ok((m_c, j))
}

fn ipm_chain(
    anchor: ImagePoint,
    params: &ParamVector,
    prev: &IpmPlaneSpec,
    cur: &IpmPlaneSpec,
    k: &CameraIntrinsics,
) -> Result<(ImagePoint, Jacobian)> {
    let m_p = prev.to_image(anchor, k)?;
    let (m_c, j_img) = image_chain(m_p, params, k)?;
    let (g_hat, jb) = backproject_with_jacobian(m_c, &cur.pose_used, k)?;
    let target = cur.pixel_of(g_hat);
    let (sin, cos) = cur.heading.sin_cos();
    let to_raster = Matrix2::new(cos, sin, sin, -cos) / cur.scale;
    Ok((target, to_raster * jb.wrt_pixel * j_img))
}

/// Where the current frame should see an image-plane anchor.
pub fn predict_image(
    anchor: ImagePoint,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<ImagePoint> {
    image_chain(anchor, params, k).map(|(m, _)| m)
}

/// Where the current frame's virtual raster should see an IPM anchor.
pub fn predict_ipm(
    anchor: ImagePoint,
    params: &ParamVector,
    prev: &IpmPlaneSpec,
    cur: &IpmPlaneSpec,
    k: &CameraIntrinsics,
) -> Result<ImagePoint> {
    ipm_chain(anchor, params, prev, cur, k).map(|(m, _)| m)
}

/// Plane-dispatching prediction.
pub fn predict(
    plane: &FieldPlane,
    anchor: ImagePoint,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<ImagePoint> {
    match plane {
        FieldPlane::Image => predict_image(anchor, params, k),
        FieldPlane::Ipm { prev, cur } => predict_ipm(anchor, params, prev, cur, k),
    }
}

fn to_residual(entry: &FieldEntry, target: ImagePoint) -> Vector2<f64> {
    Vector2::new(
        target.u - entry.anchor.u - entry.displacement.dx,
        target.v - entry.anchor.v - entry.displacement.dy,
    )
}

/// Image-plane residual `m_c - m_p - d`, pixels.
pub fn residual_image(
    entry: &FieldEntry,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>> {
    Ok(to_residual(entry, predict_image(entry.anchor, params, k)?))
}

/// IPM-plane residual, virtual raster pixels.
pub fn residual_ipm(
    entry: &FieldEntry,
    params: &ParamVector,
    prev: &IpmPlaneSpec,
    cur: &IpmPlaneSpec,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>> {
    Ok(to_residual(
        entry,
        predict_ipm(entry.anchor, params, prev, cur, k)?,
    ))
}

pub fn residual(
    plane: &FieldPlane,
    entry: &FieldEntry,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>> {
    Ok(to_residual(entry, predict(plane, entry.anchor, params, k)?))
}

/// Residual plus its derivative with respect to the seven free parameters
/// (pitch_prev, roll_prev, pitch_cur, roll_cur, tx, tz, yaw).
pub fn residual_with_jacobian(
    plane: &FieldPlane,
    entry: &FieldEntry,
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Result<(Vector2<f64>, Jacobian)> {
    let (target, j) = match plane {
        FieldPlane::Image => image_chain(entry.anchor, params, k)?,
        FieldPlane::Ipm { prev, cur } => ipm_chain(entry.anchor, params, prev, cur, k)?,
    };
    Ok((to_residual(entry, target), j))
}

/// Sum of squared residual lengths over `indices`; `None` if any entry
/// leaves the valid domain under `params`.
pub fn field_cost(
    field: &DisplacementField,
    indices: &[usize],
    params: &ParamVector,
    k: &CameraIntrinsics,
) -> Option<f64> {
    if !params.is_valid() {
        return None;
    }
    let mut cost = 0.0;
    for &i in indices {
        let r = residual(field.plane(), &field.entries()[i], params, k).ok()?;
        cost += r.norm_squared();
    }
    Some(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseParams;
    use crate::registration::Displacement;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 400.0, 300.0, 800, 600).unwrap()
    }

    #[test]
    fn static_camera_has_zero_residual() {
        let p = ParamVector::initial(1.0, 700.0);
        let e = FieldEntry::new(ImagePoint::new(250.0, 400.0), Displacement::default());
        assert!(residual_image(&e, &p, &k()).unwrap().norm() < 1e-9);
    }

    #[test]
    fn ipm_residual_cancels_at_building_estimate() {
        let est = ParamVector {
            roll_prev: 0.03,
            pitch_cur: 1.05,
            ..ParamVector::initial(1.1, 700.0)
        };
        let spec = |pose: PoseParams| IpmPlaneSpec {
            scale: 2.0,
            origin: crate::geometry::GroundPoint::new(-800.0, 1400.0),
            heading: 0.0,
            width: 800,
            height: 700,
            pose_used: pose,
        };
        let (sp, sc) = (spec(est.prev_pose()), spec(est.cur_pose()));
        let e = FieldEntry::new(ImagePoint::new(300.0, 420.0), Displacement::default());
        assert!(residual_ipm(&e, &est, &sp, &sc, &k()).unwrap().norm() < 1e-9);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let params = ParamVector {
            pitch_prev: 1.05,
            roll_prev: 0.04,
            pitch_cur: 1.1,
            roll_cur: -0.02,
            tx: 20.0,
            tz: 150.0,
            yaw: 0.01,
            height: 700.0,
        };
        let e = FieldEntry::new(
            ImagePoint::new(310.0, 350.0),
            Displacement::new(1.0, 2.0, 1.0),
        );
        let plane = FieldPlane::Image;
        let (_, j) = residual_with_jacobian(&plane, &e, &params, &k()).unwrap();
        for c in 0..7 {
            let step = 1e-6 * if (4..6).contains(&c) { 100.0 } else { 1.0 };
            let mut hi = params.free();
            let mut lo = params.free();
            hi[c] += step;
            lo[c] -= step;
            let rh = residual(&plane, &e, &params.with_free(hi), &k()).unwrap();
            let rl = residual(&plane, &e, &params.with_free(lo), &k()).unwrap();
            let fd = (rh - rl) / (2.0 * step);
            let an = j.column(c);
            assert!(
                (fd - an).norm() <= 1e-4 * an.norm().max(1e-3),
                "col {c}: {fd} vs {an}"
            );
        }
    }
}
