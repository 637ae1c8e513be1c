//! Surge-guided line-of-sight (SGLOS) guidance and input saturation.

use core::f64::consts::{FRAC_PI_4, PI};

use libm::{atan, cos, sqrt};

use crate::angle::{angle_diff, wrap_angle};
use crate::model::{GuidanceState, InputCmd};
use crate::path::{sample_path, Path};
use crate::Result;

/// SGLOS gains: `k1` shapes the surge command, `k2` the target speed,
/// `delta` is the lookahead distance in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct SglosParams {
    pub k1: f64,
    pub k2: f64,
    pub delta: f64,
}

impl Default for SglosParams {
    fn default() -> Self {
        Self { k1: 0.3, k2: 0.8, delta: 0.5 }
    }
}

/// Box set `U` and rate set `U_g` on the guidance input.
///
/// Surge lies in `[0, u_max]`, target speed in `[eps, u_tar_max]`, heading in
/// `(-π, π]`. Per guidance step the surge may change by `du_max` and the
/// heading by `dpsi_max` (measured along the shortest rotation); the target
/// speed rate is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct InputConstraints {
    pub eps: f64,
    pub u_max: f64,
    pub u_tar_max: f64,
    pub du_max: f64,
    pub dpsi_max: f64,
}

impl Default for InputConstraints {
    fn default() -> Self {
        Self { eps: 0.01, u_max: 0.225, u_tar_max: 0.75, du_max: 0.05, dpsi_max: FRAC_PI_4 }
    }
}

impl InputConstraints {
    pub fn is_valid(&self) -> bool {
        self.eps > 0.0 && self.eps < self.u_tar_max && self.u_max > 0.0 && self.du_max > 0.0 && self.dpsi_max > 0.0
    }

    /// Membership in `U`.
    pub fn in_box(&self, u: &InputCmd) -> bool {
        (0.0..=self.u_max).contains(&u.u)
            && u.psi > -PI
            && u.psi <= PI
            && (self.eps..=self.u_tar_max).contains(&u.u_tar)
    }

    /// Membership of the increment `next − prev` in `U_g`.
    pub fn rate_ok(&self, prev: &InputCmd, next: &InputCmd) -> bool {
        (next.u - prev.u).abs() <= self.du_max && angle_diff(next.psi, prev.psi).abs() <= self.dpsi_max
    }

    pub fn admits(&self, prev: &InputCmd, next: &InputCmd) -> bool {
        self.in_box(next) && self.rate_ok(prev, next)
    }
}

/// Raw SGLOS command at state `x`.
///
/// The surge entering the target-speed component is the law's own surge
/// command, so on the path the law commands `(k1·Δ, φ_p, k1·Δ)`.
pub fn sglos<P: Path + ?Sized>(x: &GuidanceState, path: &P, params: &SglosParams) -> Result<InputCmd> {
    let pt = sample_path(path, x.omega()?)?;
    let u = params.k1 * sqrt(x.y_e * x.y_e + params.delta * params.delta);
    let psi = wrap_angle(pt.phi_p - atan(x.y_e / params.delta));
    let u_tar = params.k2 * x.x_e + u * cos(angle_diff(psi, pt.phi_p));
    Ok(InputCmd { u, psi, u_tar })
}

/// Largest `x ≤ target` (stepping down from `target` by ulps) that keeps
/// `|x − anchor| ≤ bound` when evaluated in floating point.
fn within(anchor: f64, target: f64, bound: f64) -> f64 {
    let mut x = target;
    while (x - anchor).abs() > bound {
        x = if x > anchor { x.next_down() } else { x.next_up() };
    }
    x
}

/// Projects `raw` onto the inputs reachable from `prev`.
///
/// The rate bound is applied first and the box second; with `prev ∈ U` the
/// result satisfies [`InputConstraints::admits`] exactly, in the same floating
/// point comparisons the checker uses.
pub fn clamp_inputs(raw: &InputCmd, prev: &InputCmd, c: &InputConstraints) -> InputCmd {
    // Components that already pass the checker are kept bit-for-bit, which
    // also makes the projection idempotent.
    let u = if (0.0..=c.u_max).contains(&raw.u) && (raw.u - prev.u).abs() <= c.du_max {
        raw.u
    } else {
        let lo = (prev.u - c.du_max).max(0.0);
        let hi = (prev.u + c.du_max).min(c.u_max);
        within(prev.u, raw.u.clamp(lo, hi), c.du_max).clamp(0.0, c.u_max)
    };

    let psi = if raw.psi > -PI && raw.psi <= PI && angle_diff(raw.psi, prev.psi).abs() <= c.dpsi_max {
        raw.psi
    } else {
        let step = angle_diff(raw.psi, prev.psi).clamp(-c.dpsi_max, c.dpsi_max);
        let mut psi = wrap_angle(prev.psi + step);
        let mut shrink = step;
        while angle_diff(psi, prev.psi).abs() > c.dpsi_max {
            shrink = if shrink > 0.0 { shrink.next_down() } else { shrink.next_up() };
            psi = wrap_angle(prev.psi + shrink);
        }
        psi
    };

    let u_tar = raw.u_tar.clamp(c.eps, c.u_tar_max);
    InputCmd { u, psi, u_tar }
}
