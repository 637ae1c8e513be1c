//! Angle helpers.

use core::f64::consts::{PI, TAU};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = libm::fmod(angle + PI, TAU);
    if a <= 0.0 {
        a += TAU;
    }
    a - PI
}

/// Shortest signed rotation taking `from` onto `to`, in `(-π, π]`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// Tracks a continuous (unwrapped) version of a wrapped angle signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unwrapper {
    last: Option<f64>,
}

impl Unwrapper {
    pub const fn new() -> Self {
        Self { last: None }
    }

    pub fn push(&mut self, wrapped: f64) -> f64 {
        let next = match self.last {
            None => wrapped,
            Some(prev) => prev + angle_diff(wrapped, prev),
        };
        self.last = Some(next);
        next
    }
}

impl Default for Unwrapper {
    fn default() -> Self {
        Self::new()
    }
}
