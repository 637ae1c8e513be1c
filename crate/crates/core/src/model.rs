//! Path-following error state, its continuous dynamics and the forward-Euler
//! model used for prediction.

use libm::{cos, sin};
use nalgebra::Vector3;

use crate::angle::{angle_diff, wrap_angle};
use crate::path::{omega_of_z, sample_path, Path, PathPoint};
use crate::{GuidanceError, Result};

/// Lower clamp for `z`, keeping `ω = 1/z − 1` finite.
pub const Z_MIN: f64 = 1e-6;

/// Controlled state: along-track error, cross-track error (meters) and the
/// bounded path variable `z ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GuidanceState {
    pub x_e: f64,
    pub y_e: f64,
    pub z: f64,
}

impl GuidanceState {
    pub const fn new(x_e: f64, y_e: f64, z: f64) -> Self {
        Self { x_e, y_e, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x_e, self.y_e, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn omega(&self) -> Result<f64> {
        omega_of_z(self.z)
    }

    fn is_finite(&self) -> bool {
        self.x_e.is_finite() && self.y_e.is_finite() && self.z.is_finite()
    }
}

/// Guidance input: surge reference (m/s), heading reference (rad) and
/// virtual-target speed (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct InputCmd {
    pub u: f64,
    pub psi: f64,
    pub u_tar: f64,
}

impl InputCmd {
    pub const fn new(u: f64, psi: f64, u_tar: f64) -> Self {
        Self { u, psi, u_tar }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.u, self.psi, self.u_tar)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Same command with the heading wrapped into `(-π, π]`.
    pub fn wrapped(self) -> Self {
        Self { psi: wrap_angle(self.psi), ..self }
    }
}

/// Planar pose in the earth-fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct VesselPose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Along- and cross-track errors of `pose` with respect to the path point at
/// `omega`: the displacement rotated into the path-tangent frame.
pub fn compute_errors<P: Path + ?Sized>(pose: &VesselPose, omega: f64, path: &P) -> Result<(f64, f64)> {
    let pt = sample_path(path, omega)?;
    Ok(errors_at(pose, &pt))
}

pub(crate) fn errors_at(pose: &VesselPose, pt: &PathPoint) -> (f64, f64) {
    let (c, s) = (cos(pt.phi_p), sin(pt.phi_p));
    let (dx, dy) = (pose.x - pt.x_p, pose.y - pt.y_p);
    (c * dx + s * dy, -s * dx + c * dy)
}

/// Error dynamics with the path geometry already evaluated at `ω(z)`.
pub(crate) fn dynamics_at(x: &GuidanceState, u: &InputCmd, v: f64, pt: &PathPoint) -> Vector3<f64> {
    let rel = angle_diff(u.psi, pt.phi_p);
    let (c, s) = (cos(rel), sin(rel));
    let kappa = pt.curvature();
    Vector3::new(
        u.u * c - v * s + u.u_tar * (kappa * x.y_e - 1.0),
        u.u * s + v * c - u.u_tar * kappa * x.x_e,
        -x.z * x.z * u.u_tar / pt.speed_factor,
    )
}

/// Time derivative `(ẋ_e, ẏ_e, ż)` of the error state under input `u` and
/// sway velocity `v`.
pub fn dynamics<P: Path + ?Sized>(x: &GuidanceState, u: &InputCmd, v: f64, path: &P) -> Result<Vector3<f64>> {
    let pt = sample_path(path, x.omega()?)?;
    Ok(dynamics_at(x, u, v, &pt))
}

/// One forward-Euler step of length `dt`.
pub fn euler_step<P: Path + ?Sized>(
    x: &GuidanceState,
    u: &InputCmd,
    v: f64,
    dt: f64,
    path: &P,
) -> Result<GuidanceState> {
    if !(dt > 0.0) {
        return Err(GuidanceError::Domain { name: "dt", value: dt });
    }
    let rate = dynamics(x, u, v, path)?;
    let next = GuidanceState::new(x.x_e + dt * rate[0], x.y_e + dt * rate[1], x.z + dt * rate[2]);
    if !next.is_finite() {
        return Err(GuidanceError::StateEscape);
    }
    Ok(GuidanceState { z: next.z.clamp(Z_MIN, 1.0), ..next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{z_of_omega, CaseStudyPath, LinePath};
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    #[test]
    fn errors_vanish_on_path() {
        let pt = sample_path(&CaseStudyPath, 7.3).unwrap();
        let pose = VesselPose { x: pt.x_p, y: pt.y_p, psi: 1.0 };
        assert_eq!(compute_errors(&pose, 7.3, &CaseStudyPath).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn errors_on_line() {
        let pose = VesselPose { x: 3.0, y: 2.0, psi: 0.0 };
        assert_eq!(compute_errors(&pose, 1.0, &LinePath::default()).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn errors_at_case_study_start() {
        // Reference values from an independent scalar evaluation:
        // path point (11.951834, 4.3125), φ_p = 0.5617168.
        let pose = VesselPose { x: 10.0, y: 10.0, psi: 0.0 };
        let (xe, ye) = compute_errors(&pose, 2.5, &CaseStudyPath).unwrap();
        assert!((xe - 1.377_470_671_488_718).abs() < 1e-9);
        assert!((ye - 5.853_194_685_483_319).abs() < 1e-9);
    }

    #[test]
    fn on_path_equilibrium() {
        let z = z_of_omega(4.0).unwrap();
        let pt = sample_path(&CaseStudyPath, 4.0).unwrap();
        let x = GuidanceState::new(0.0, 0.0, z);
        let u = InputCmd::new(0.15, pt.phi_p, 0.15);
        let d = dynamics(&x, &u, 0.0, &CaseStudyPath).unwrap();
        assert_eq!((d[0], d[1]), (0.0, 0.0));
        assert_eq!(d[2], -z * z * 0.15 / pt.speed_factor);
        let next = euler_step(&x, &u, 0.0, 1.0, &CaseStudyPath).unwrap();
        assert_eq!((next.x_e, next.y_e), (0.0, 0.0));
    }

    #[test]
    fn perpendicular_heading() {
        let z = z_of_omega(4.0).unwrap();
        let pt = sample_path(&CaseStudyPath, 4.0).unwrap();
        let x = GuidanceState::new(0.0, 0.0, z);
        let u = InputCmd::new(0.2, pt.phi_p + FRAC_PI_2, 0.1);
        let d = dynamics(&x, &u, 0.0, &CaseStudyPath).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);
        assert!((d[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn z_rate_on_line_at_start() {
        let d = dynamics(&GuidanceState::new(0.0, 0.0, 1.0), &InputCmd::new(0.0, 0.0, 1.0), 0.0, &LinePath::default())
            .unwrap();
        assert_eq!(d[2], -1.0);
    }

    #[test]
    fn euler_step_is_rate_times_dt() {
        let x = GuidanceState::new(0.3, -0.2, 0.4);
        let u = InputCmd::new(0.1, 0.7, 0.12);
        let d = dynamics(&x, &u, 0.05, &CaseStudyPath).unwrap();
        let n = euler_step(&x, &u, 0.05, 1.0, &CaseStudyPath).unwrap();
        assert_eq!(n, GuidanceState::new(x.x_e + d[0], x.y_e + d[1], x.z + d[2]));
        assert!(euler_step(&x, &u, 0.0, 0.0, &CaseStudyPath).is_err());
    }

    #[test]
    fn euler_local_error_is_second_order() {
        // One Euler step of length h against a fine-step reference: the
        // local error should shrink by ~4 when h halves.
        let x = GuidanceState::new(1.0, 2.0, 0.3);
        let u = InputCmd::new(0.2, 0.3, 0.15);
        let reference = |h: f64| {
            let mut s = x;
            let n = 4096;
            for _ in 0..n {
                s = euler_step(&s, &u, 0.05, h / n as f64, &CaseStudyPath).unwrap();
            }
            s.to_vector()
        };
        let err = |h: f64| (euler_step(&x, &u, 0.05, h, &CaseStudyPath).unwrap().to_vector() - reference(h)).norm();
        let ratio = err(1.0) / err(0.5);
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
        // Two half steps versus one full step: difference is O(h²), halving
        // h should shrink it by ~4 as well.
        let split = |h: f64| {
            let a = euler_step(&x, &u, 0.05, h / 2.0, &CaseStudyPath).unwrap();
            let b = euler_step(&a, &u, 0.05, h / 2.0, &CaseStudyPath).unwrap();
            (b.to_vector() - euler_step(&x, &u, 0.05, h, &CaseStudyPath).unwrap().to_vector()).norm()
        };
        let r2 = split(1.0) / split(0.5);
        assert!((3.6..4.4).contains(&r2), "split ratio {r2}");
    }

    #[test]
    fn euler_global_error_is_first_order() {
        // Fixed 4 s horizon: halving dt (and doubling the step count) should
        // halve the error against a fine-step reference.
        let x = GuidanceState::new(1.0, 2.0, 0.3);
        let u = InputCmd::new(0.2, 0.3, 0.15);
        let run = |steps: usize| {
            let mut s = x;
            for _ in 0..steps {
                s = euler_step(&s, &u, 0.05, 4.0 / steps as f64, &CaseStudyPath).unwrap();
            }
            s.to_vector()
        };
        let reference = run(1 << 16);
        let ratio = (run(8) - reference).norm() / (run(16) - reference).norm();
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn z_decreases_with_positive_target_speed() {
        let mut x = GuidanceState::new(0.5, -1.0, 0.9);
        let u = InputCmd::new(0.15, 0.3, 0.2);
        for _ in 0..50 {
            let n = euler_step(&x, &u, 0.0, 1.0, &CaseStudyPath).unwrap();
            assert!(n.z < x.z);
            x = n;
        }
    }

    proptest! {
        #[test]
        fn rotation_preserves_distance(x in -50.0f64..50.0, y in -50.0f64..50.0, w in 0.0f64..120.0) {
            let pt = sample_path(&CaseStudyPath, w).unwrap();
            let (xe, ye) = compute_errors(&VesselPose { x, y, psi: 0.0 }, w, &CaseStudyPath).unwrap();
            let d = libm::hypot(x - pt.x_p, y - pt.y_p);
            prop_assert!((libm::hypot(xe, ye) - d).abs() <= 1e-12 * (1.0 + d));
        }
    }
}
