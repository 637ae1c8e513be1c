//! Low-level loop emulation: a delayed critically damped second-order filter
//! `a² / (s + a)²` per commanded channel.
//!
//! The input is treated as zero-order held over each plant step, so the
//! filter is propagated in closed form. The delay need not be a multiple of
//! the step: each step is split at the instant where the delayed signal
//! switches between two held samples.

use alloc::collections::VecDeque;

use libm::{exp, floor, round};

use crate::{GuidanceError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct FilterParams {
    /// Double-pole location `a` in 1/s (poles at `s = −a`).
    pub pole: f64,
    /// Pure input delay in seconds.
    pub delay: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { pole: 7.6923, delay: 0.13 }
    }
}

#[derive(Debug, Clone)]
pub struct LowLevelFilter {
    pole: f64,
    dt: f64,
    whole: usize,
    frac: f64,
    x1: f64,
    x2: f64,
    history: VecDeque<f64>,
}

impl LowLevelFilter {
    /// Filter at rest at `initial` (both states and the delay line hold it).
    pub fn new(params: FilterParams, dt: f64, initial: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(GuidanceError::Domain { name: "dt", value: dt });
        }
        if !(params.pole > 0.0) {
            return Err(GuidanceError::Domain { name: "pole", value: params.pole });
        }
        if !(params.delay >= 0.0) {
            return Err(GuidanceError::Domain { name: "delay", value: params.delay });
        }
        let mut ratio = params.delay / dt;
        if (ratio - round(ratio)).abs() < 1e-9 {
            ratio = round(ratio);
        }
        let whole = floor(ratio) as usize;
        let frac = ratio - whole as f64;
        let history = core::iter::repeat_n(initial, whole + 2).collect();
        Ok(Self { pole: params.pole, dt, whole, frac, x1: initial, x2: initial, history })
    }

    pub fn output(&self) -> f64 {
        self.x2
    }

    /// Holds `input` over the next plant step and returns the output at its end.
    pub fn step(&mut self, input: f64) -> f64 {
        self.history.push_back(input);
        self.history.pop_front();
        let last = self.history.len() - 1;
        let newer = self.history[last - self.whole];
        let older = self.history[last - self.whole - 1];
        if self.frac > 0.0 {
            self.hold(older, self.frac * self.dt);
        }
        self.hold(newer, (1.0 - self.frac) * self.dt);
        self.x2
    }

    /// Exact propagation over `span` seconds with constant input `c`.
    fn hold(&mut self, c: f64, span: f64) {
        let (e1, e2) = (self.x1 - c, self.x2 - c);
        let decay = exp(-self.pole * span);
        self.x1 = c + decay * e1;
        self.x2 = c + decay * (e2 + self.pole * span * e1);
    }
}
