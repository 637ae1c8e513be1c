use crate::qp::QpError;

pub type Result<T, E = GuidanceError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuidanceError {
    #[error("path is not regular at omega = {omega} (speed factor {speed_factor:e})")]
    NonRegularPath { omega: f64, speed_factor: f64 },
    #[error("{name} = {value} is outside its domain")]
    Domain { name: &'static str, value: f64 },
    #[error("state left the finite domain during integration")]
    StateEscape,
    #[error("terminal weight has not been synthesized or set")]
    TerminalWeightUnset,
    #[error("terminal closed loop is not Schur stable (spectral radius {spectral_radius})")]
    UnstableTerminalLoop { spectral_radius: f64 },
    #[error("previous input lies outside the admissible input set")]
    InfeasibleStart,
    #[error("QP back-end failed: {0}")]
    QpFailure(#[from] QpError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
