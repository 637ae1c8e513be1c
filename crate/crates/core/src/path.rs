//! Parametric desired paths and the `ω ↔ z` path-variable change.
//!
//! A path is a smooth map `ω ↦ (x_p(ω), y_p(ω))` for `ω ≥ 0`. Guidance only
//! needs the position, the tangent and the second derivative; from those
//! [`sample_path`] derives the tangent angle `φ_p`, the speed factor
//! `F = ‖∂P/∂ω‖` and the angle rate `∂φ_p/∂ω`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{atan2, cos, sin, sqrt};

use crate::{GuidanceError, Result};

/// Paths whose speed factor drops below this value are rejected.
pub const F_MIN: f64 = 1e-9;

/// A smooth planar path parameterised by `ω`.
pub trait Path {
    /// `(x_p, y_p)` in meters.
    fn position(&self, omega: f64) -> (f64, f64);
    /// `(∂x_p/∂ω, ∂y_p/∂ω)`.
    fn first_derivative(&self, omega: f64) -> (f64, f64);
    /// `(∂²x_p/∂ω², ∂²y_p/∂ω²)`.
    fn second_derivative(&self, omega: f64) -> (f64, f64);
}

impl<P: Path + ?Sized> Path for &P {
    fn position(&self, omega: f64) -> (f64, f64) {
        (**self).position(omega)
    }
    fn first_derivative(&self, omega: f64) -> (f64, f64) {
        (**self).first_derivative(omega)
    }
    fn second_derivative(&self, omega: f64) -> (f64, f64) {
        (**self).second_derivative(omega)
    }
}

/// Path geometry evaluated at one value of the path variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub omega: f64,
    pub x_p: f64,
    pub y_p: f64,
    /// Tangent angle in `(-π, π]`.
    pub phi_p: f64,
    /// Speed factor `F(ω)`, meters per unit `ω`.
    pub speed_factor: f64,
    /// `∂φ_p/∂ω`, radians per unit `ω`.
    pub dphi_domega: f64,
}

impl PathPoint {
    /// Path curvature seen per unit of virtual-target travel, `(∂φ_p/∂ω) / F`.
    pub fn curvature(&self) -> f64 {
        self.dphi_domega / self.speed_factor
    }
}

/// Evaluates the geometry needed by the error model at `omega`.
pub fn sample_path<P: Path + ?Sized>(path: &P, omega: f64) -> Result<PathPoint> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(GuidanceError::Domain { name: "omega", value: omega });
    }
    sample_unchecked(path, omega)
}

/// Same as [`sample_path`] but also accepts `ω < 0`, for finite differences
/// that straddle the path start.
pub(crate) fn sample_unchecked<P: Path + ?Sized>(path: &P, omega: f64) -> Result<PathPoint> {
    let (x_p, y_p) = path.position(omega);
    let (dx, dy) = path.first_derivative(omega);
    let (ddx, ddy) = path.second_derivative(omega);
    let f2 = dx * dx + dy * dy;
    let speed_factor = sqrt(f2);
    if !(speed_factor > F_MIN) {
        return Err(GuidanceError::NonRegularPath { omega, speed_factor });
    }
    let mut phi_p = atan2(dy, dx);
    if phi_p <= -PI {
        phi_p = PI;
    }
    Ok(PathPoint {
        omega,
        x_p,
        y_p,
        phi_p,
        speed_factor,
        dphi_domega: (dx * ddy - dy * ddx) / f2,
    })
}

/// `z = 1/(ω + 1)`, a bounded path variable that tends to zero as `ω → ∞`.
pub fn z_of_omega(omega: f64) -> Result<f64> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(GuidanceError::Domain { name: "omega", value: omega });
    }
    Ok(1.0 / (omega + 1.0))
}

/// Inverse of [`z_of_omega`] on `(0, 1]`.
pub fn omega_of_z(z: f64) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0) {
        return Err(GuidanceError::Domain { name: "z", value: z });
    }
    Ok(1.0 / z - 1.0)
}

/// The sinusoidal case-study path
/// `x_p = 1.25ω + 10 sin(2πω/40) + 5`, `y_p = 1.75ω − 0.01ω²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaseStudyPath;

impl CaseStudyPath {
    const WAVE: f64 = 2.0 * PI / 40.0;
}

impl Path for CaseStudyPath {
    fn position(&self, w: f64) -> (f64, f64) {
        (1.25 * w + 10.0 * sin(Self::WAVE * w) + 5.0, 1.75 * w - 0.01 * w * w)
    }

    fn first_derivative(&self, w: f64) -> (f64, f64) {
        (1.25 + 10.0 * Self::WAVE * cos(Self::WAVE * w), 1.75 - 0.02 * w)
    }

    fn second_derivative(&self, w: f64) -> (f64, f64) {
        (-10.0 * Self::WAVE * Self::WAVE * sin(Self::WAVE * w), -0.02)
    }
}

/// Straight line `origin + ω · direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePath {
    pub origin: (f64, f64),
    pub direction: (f64, f64),
}

impl Default for LinePath {
    fn default() -> Self {
        Self { origin: (0.0, 0.0), direction: (1.0, 0.0) }
    }
}

impl Path for LinePath {
    fn position(&self, w: f64) -> (f64, f64) {
        (self.origin.0 + w * self.direction.0, self.origin.1 + w * self.direction.1)
    }

    fn first_derivative(&self, _w: f64) -> (f64, f64) {
        self.direction
    }

    fn second_derivative(&self, _w: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// Polynomial path; coefficient `i` multiplies `ω^i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolynomialPath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PolynomialPath {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }
}

/// Horner evaluation of the polynomial and its first two derivatives.
fn poly_eval(coeffs: &[f64], w: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for &c in coeffs.iter().rev() {
        ddp = ddp * w + 2.0 * dp;
        dp = dp * w + p;
        p = p * w + c;
    }
    (p, dp, ddp)
}

impl Path for PolynomialPath {
    fn position(&self, w: f64) -> (f64, f64) {
        (poly_eval(&self.x, w).0, poly_eval(&self.y, w).0)
    }

    fn first_derivative(&self, w: f64) -> (f64, f64) {
        (poly_eval(&self.x, w).1, poly_eval(&self.y, w).1)
    }

    fn second_derivative(&self, w: f64) -> (f64, f64) {
        (poly_eval(&self.x, w).2, poly_eval(&self.y, w).2)
    }
}

/// Any of the built-in path families, selectable at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPath {
    CaseStudy(CaseStudyPath),
    Line(LinePath),
    Polynomial(PolynomialPath),
}

impl Path for AnyPath {
    fn position(&self, w: f64) -> (f64, f64) {
        match self {
            AnyPath::CaseStudy(p) => p.position(w),
            AnyPath::Line(p) => p.position(w),
            AnyPath::Polynomial(p) => p.position(w),
        }
    }

    fn first_derivative(&self, w: f64) -> (f64, f64) {
        match self {
            AnyPath::CaseStudy(p) => p.first_derivative(w),
            AnyPath::Line(p) => p.first_derivative(w),
            AnyPath::Polynomial(p) => p.first_derivative(w),
        }
    }

    fn second_derivative(&self, w: f64) -> (f64, f64) {
        match self {
            AnyPath::CaseStudy(p) => p.second_derivative(w),
            AnyPath::Line(p) => p.second_derivative(w),
            AnyPath::Polynomial(p) => p.second_derivative(w),
        }
    }
}
