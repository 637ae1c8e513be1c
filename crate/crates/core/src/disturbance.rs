//! Sway-velocity disturbance profiles.

use core::f64::consts::PI;

use libm::{fmod, sin};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// `A sin(2πt/T + phase)`.
    Sinusoid { amplitude: f64, period: f64, phase: f64 },
    /// Linear chirp from `f0` to `f1` Hz over `[0, switch_time]`, followed by
    /// its time reversal; the pair repeats with period `2·switch_time`.
    ChirpMirror { amplitude: f64, f0: f64, f1: f64, switch_time: f64 },
}

impl DisturbanceSpec {
    /// Sway velocity `v(t)` in m/s.
    pub fn sample(&self, t: f64) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Sinusoid { amplitude, period, phase } => amplitude * sin(2.0 * PI * t / period + phase),
            Self::ChirpMirror { amplitude, f0, f1, switch_time } => {
                let folded = fmod(t.max(0.0), 2.0 * switch_time);
                let s = if folded <= switch_time { folded } else { 2.0 * switch_time - folded };
                amplitude * sin(2.0 * PI * (f0 * s + (f1 - f0) * s * s / (2.0 * switch_time)))
            }
        }
    }

    /// Declared bound on `|v|`.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Sinusoid { amplitude, .. } | Self::ChirpMirror { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Instantaneous frequency in Hz, where defined.
    pub fn frequency(&self, t: f64) -> Option<f64> {
        match *self {
            Self::None => None,
            Self::Sinusoid { period, .. } => Some(1.0 / period),
            Self::ChirpMirror { f0, f1, switch_time, .. } => {
                let folded = fmod(t.max(0.0), 2.0 * switch_time);
                let s = if folded <= switch_time { folded } else { 2.0 * switch_time - folded };
                Some(f0 + (f1 - f0) * s / switch_time)
            }
        }
    }

    /// Same profile with the amplitude replaced.
    pub fn with_amplitude(self, a: f64) -> Self {
        match self {
            Self::None => Self::None,
            Self::Sinusoid { period, phase, .. } => Self::Sinusoid { amplitude: a, period, phase },
            Self::ChirpMirror { f0, f1, switch_time, .. } => Self::ChirpMirror { amplitude: a, f0, f1, switch_time },
        }
    }
}
