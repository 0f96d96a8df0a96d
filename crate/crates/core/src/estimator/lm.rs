//! Levenberg–Marquardt over the seven free parameters.

use nalgebra::{SMatrix, SVector};

use super::residual::{field_cost, residual_with_jacobian};
use super::{DisplacementField, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

type Mat7 = SMatrix<f64, 7, 7>;
type Vec7 = SVector<f64, 7>;

/// Fewest entries a solve accepts.
pub const MIN_ENTRIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when the scaled step is shorter than this.
    pub step_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_iterations: 100,
            cost_tolerance: 1e-10,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: ParamVector,
    /// Sum of squared residual lengths over `used`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Entries that stayed in the valid domain at the start and were solved against.
    pub used: Vec<usize>,
}

// Lengths are optimized in units of the camera height.
fn to_scaled(p: &ParamVector) -> Vec7 {
    let f = p.free();
    let h = p.height;
    Vec7::from([f[0], f[1], f[2], f[3], f[4] / h, f[5] / h, f[6]])
}

fn from_scaled(template: &ParamVector, x: &Vec7) -> ParamVector {
    let h = template.height;
    template.with_free([x[0], x[1], x[2], x[3], x[4] * h, x[5] * h, x[6]])
}

fn normal_equations(
    field: &DisplacementField,
    used: &[usize],
    p: &ParamVector,
    k: &CameraIntrinsics,
) -> Option<(Mat7, Vec7)> {
    let mut jtj = Mat7::zeros();
    let mut jtr = Vec7::zeros();
    for &i in used {
        let (r, mut j) = residual_with_jacobian(field.plane(), &field.entries()[i], p, k).ok()?;
        j.column_mut(4).scale_mut(p.height);
        j.column_mut(5).scale_mut(p.height);
        jtj += j.transpose() * j;
        jtr += j.transpose() * r;
    }
    Some((jtj, jtr))
}

/// Minimizes the squared residual sum over `indices` starting from `init`.
///
/// Entries whose chain is invalid at `init` are left out; a step that would
/// push any remaining entry out of the valid domain is rejected like a
/// cost increase.
pub fn solve_lm(
    field: &DisplacementField,
    indices: &[usize],
    init: &ParamVector,
    k: &CameraIntrinsics,
    settings: &LmSettings,
) -> Result<LmOutcome> {
    if !init.is_valid() {
        return Err(Error::InvalidParameter(
            "initial parameters outside their ranges".into(),
        ));
    }
    let used: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| super::residual::residual(field.plane(), &field.entries()[i], init, k).is_ok())
        .collect();
    if used.len() < MIN_ENTRIES {
        return Err(Error::InsufficientInliers {
            needed: MIN_ENTRIES,
            available: used.len(),
        });
    }

    let mut params = *init;
    let mut cost = field_cost(field, &used, &params, k).expect("entries checked above");
    let mut lambda = settings.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut normal = normal_equations(field, &used, &params, k);

    while iterations < settings.max_iterations {
        if cost == 0.0 {
            converged = true;
            break;
        }
        let Some((jtj, jtr)) = normal else { break };
        iterations += 1;

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for d in 0..7 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= settings.damping_factor;
                continue;
            };
            let step = -chol.solve(&jtr);
            let candidate = from_scaled(&params, &(to_scaled(&params) + step));
            match field_cost(field, &used, &candidate, k) {
                Some(c) if c <= cost => {
                    let decrease = cost - c;
                    params = candidate;
                    let previous = cost;
                    cost = c;
                    lambda = (lambda / settings.damping_factor).max(1e-15);
                    accepted = true;
                    if decrease <= settings.cost_tolerance * previous
                        || step.norm() < settings.step_tolerance
                    {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    if step.norm() < settings.step_tolerance {
                        converged = true;
                        break;
                    }
                    lambda *= settings.damping_factor;
                }
            }
        }
        if converged || !accepted {
            // damping saturated: no descent direction left at this precision
            converged |= !accepted;
            break;
        }
        normal = normal_equations(field, &used, &params, k);
    }

    Ok(LmOutcome {
        params,
        cost,
        iterations,
        converged,
        used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ImagePoint, MotionParams, PoseParams};
    use crate::patch_grid::make_grid;
    use crate::synth::{exact_field, GroundTexture, PlaneRequest, Scenario};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 400.0, 300.0, 800, 600).unwrap()
    }

    fn scenario(pitch: f64, roll: f64, motion: MotionParams) -> Scenario {
        Scenario {
            pose_prev: PoseParams::new(pitch, roll, 700.0).unwrap(),
            pose_cur: PoseParams::new(pitch + 0.01, roll - 0.005, 700.0).unwrap(),
            motion,
            intrinsics: k(),
            texture: GroundTexture::floor(0),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    fn truth(s: &Scenario) -> ParamVector {
        ParamVector::from_parts(&s.pose_prev, &s.pose_cur, &s.motion)
    }

    fn field_for(s: &Scenario) -> DisplacementField {
        let grid = make_grid(&k(), 9, 11, 64.0).unwrap();
        let anchors: Vec<ImagePoint> = grid.points().to_vec();
        exact_field(s, &anchors, &PlaneRequest::Image)
    }

    #[test]
    fn truth_is_stationary() {
        let s = scenario(1.0, 0.03, MotionParams::new(10.0, 40.0, 0.01));
        let f = field_for(&s);
        let all: Vec<usize> = (0..f.len()).collect();
        let out = solve_lm(&f, &all, &truth(&s), &k(), &LmSettings::default()).unwrap();
        let (a, b) = (out.params.free(), truth(&s).free());
        for i in 0..7 {
            assert!((a[i] - b[i]).abs() < 1e-8, "param {i} moved");
        }
    }

    #[test]
    fn recovers_truth_from_default_start() {
        for (pitch, motion) in [
            (0.9, MotionParams::new(5.0, 30.0, 0.005)),
            (1.2, MotionParams::new(-8.0, 25.0, -0.01)),
        ] {
            let s = scenario(pitch, 0.02, motion);
            let f = field_for(&s);
            let all: Vec<usize> = (0..f.len()).collect();
            let init = ParamVector::initial(std::f64::consts::FRAC_PI_3, 700.0);
            let out = solve_lm(&f, &all, &init, &k(), &LmSettings::default()).unwrap();
            let (a, b) = (out.params.free(), truth(&s).free());
            for i in [0, 1, 2, 3, 6] {
                assert!(
                    (a[i] - b[i]).abs() < 1e-3,
                    "pitch {pitch}: angle {i}: {} vs {}",
                    a[i],
                    b[i]
                );
            }
            for i in [4, 5] {
                assert!(
                    (a[i] - b[i]).abs() < 1e-2,
                    "pitch {pitch}: length {i}: {} vs {}",
                    a[i],
                    b[i]
                );
            }
        }
    }

    #[test]
    fn too_few_entries() {
        let s = scenario(1.0, 0.0, MotionParams::new(0.0, 20.0, 0.0));
        let f = field_for(&s);
        let r = solve_lm(&f, &[0, 1, 2], &truth(&s), &k(), &LmSettings::default());
        assert!(matches!(
            r,
            Err(Error::InsufficientInliers {
                needed: 4,
                available: 3
            })
        ));
    }
}
