//! Shared fixtures for the benchmarks.

use groundpose::estimator::{DisplacementField, ParamVector};
use groundpose::patch_grid::make_grid;
use groundpose::synth::{exact_field, render, GroundTexture, PlaneRequest, Scenario};
use groundpose::{CameraIntrinsics, ImageBuffer, MotionParams, PoseParams};

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(600.0, 600.0, 400.0, 300.0, 800, 600).expect("valid intrinsics")
}

pub fn scenario() -> Scenario {
    Scenario {
        pose_prev: PoseParams::new(1.05, 0.03, 700.0).expect("valid pose"),
        pose_cur: PoseParams::new(1.06, 0.02, 700.0).expect("valid pose"),
        motion: MotionParams::new(15.0, 150.0, 0.01),
        intrinsics: intrinsics(),
        texture: GroundTexture::floor(1),
        noise_sigma: 0.01,
        seed: 3,
    }
}

pub fn truth() -> ParamVector {
    let s = scenario();
    ParamVector::from_parts(&s.pose_prev, &s.pose_cur, &s.motion)
}

pub fn frames() -> (ImageBuffer, ImageBuffer) {
    render(&scenario())
}

/// Noise-free image-plane field on the default 11x9 grid.
pub fn field() -> DisplacementField {
    let grid = make_grid(&intrinsics(), 9, 11, 64.0).expect("grid fits");
    exact_field(&scenario(), grid.points(), &PlaneRequest::Image)
}
