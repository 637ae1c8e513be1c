//! Scenario documents: everything a closed-loop run depends on.

use std::fs;
use std::path::Path as FsPath;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use usv_guidance::disturbance::DisturbanceSpec;
use usv_guidance::filter::FilterParams;
use usv_guidance::path::sample_path;
use usv_guidance::{
    AnyPath, CaseStudyPath, InputCmd, InputConstraints, LinePath, NmpcConfig, PolynomialPath, SglosParams,
};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Nmpc,
    Pnmpc,
    Sglos,
}

impl Law {
    pub const ALL: [Law; 3] = [Law::Nmpc, Law::Pnmpc, Law::Sglos];

    pub fn name(self) -> &'static str {
        match self {
            Law::Nmpc => "nmpc",
            Law::Pnmpc => "pnmpc",
            Law::Sglos => "sglos",
        }
    }

    pub fn is_predictive(self) -> bool {
        !matches!(self, Law::Sglos)
    }
}

impl std::str::FromStr for Law {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "nmpc" => Ok(Law::Nmpc),
            "pnmpc" => Ok(Law::Pnmpc),
            "sglos" => Ok(Law::Sglos),
            other => Err(SimError::Config(format!("unknown law `{other}` (expected nmpc, pnmpc or sglos)"))),
        }
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    CaseStudy,
    Line {
        #[serde(default)]
        origin: [f64; 2],
        direction: [f64; 2],
    },
    /// Coefficient `i` multiplies `ω^i`.
    Polynomial { x: Vec<f64>, y: Vec<f64> },
}

impl PathSpec {
    pub fn build(&self) -> AnyPath {
        match self {
            PathSpec::CaseStudy => AnyPath::CaseStudy(CaseStudyPath),
            PathSpec::Line { origin, direction } => AnyPath::Line(LinePath {
                origin: (origin[0], origin[1]),
                direction: (direction[0], direction[1]),
            }),
            PathSpec::Polynomial { x, y } => AnyPath::Polynomial(PolynomialPath::new(x.clone(), y.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPose {
    pub x: f64,
    pub y: f64,
    /// Defaults to the path tangent at `omega0`.
    #[serde(default)]
    pub psi: Option<f64>,
}

/// Overrides for the predictive laws. `u_ref` is always `(u_r, 0, u_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveParams {
    pub horizon: usize,
    pub q: [f64; 3],
    pub r: [f64; 3],
    pub lambda: f64,
    /// Row-major terminal weight; synthesized from the SGLOS law when absent.
    pub terminal_weight: Option<[[f64; 3]; 3]>,
    pub max_iterations: usize,
    pub kkt_tol: f64,
}

impl Default for PredictiveParams {
    fn default() -> Self {
        let d = NmpcConfig::default();
        Self {
            horizon: d.horizon,
            q: d.q.into(),
            r: d.r.into(),
            lambda: d.lambda,
            terminal_weight: None,
            max_iterations: d.max_iterations,
            kkt_tol: d.kkt_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub enabled: bool,
    #[serde(default)]
    pub params: FilterParams,
}

fn default_band() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub path: PathSpec,
    pub initial_pose: InitialPose,
    pub omega0: f64,
    pub u_r: f64,
    /// Guidance period, seconds.
    pub t_m: f64,
    /// Plant integration step, seconds.
    pub t_p: f64,
    pub duration: f64,
    pub law: Law,
    #[serde(default)]
    pub predictive: PredictiveParams,
    #[serde(default)]
    pub sglos: SglosParams,
    #[serde(default)]
    pub constraints: InputConstraints,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub filter: FilterSpec,
    /// Command treated as applied before the first guidance step. Defaults
    /// to `(0, φ_p(ω₀), eps)`.
    #[serde(default)]
    pub initial_command: Option<InputCmd>,
    /// Cross-track band used for the time-to-converge metric, meters.
    #[serde(default = "default_band")]
    pub converge_band: f64,
}

/// Multiple of `unit` closest to `value`, if within rounding of an integer.
fn whole_multiple(value: f64, unit: f64) -> Option<usize> {
    let ratio = value / unit;
    let n = ratio.round();
    ((ratio - n).abs() <= 1e-9 * ratio.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(file: &FsPath) -> Result<Self, SimError> {
        let text = fs::read_to_string(file).map_err(|e| SimError::Config(format!("{}: {e}", file.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_law(&self, law: Law) -> Self {
        Self { law, ..self.clone() }
    }

    /// Plant steps per guidance period.
    pub fn steps_per_guidance(&self) -> usize {
        whole_multiple(self.t_m, self.t_p).unwrap_or(1)
    }

    pub fn plant_steps(&self) -> usize {
        whole_multiple(self.duration, self.t_p).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.t_p > 0.0 && self.t_m > 0.0) {
            return bad("t_m and t_p must be positive");
        }
        if whole_multiple(self.t_m, self.t_p).is_none() {
            return bad("t_m must be an integer multiple of t_p");
        }
        if !(self.duration > 0.0) || whole_multiple(self.duration, self.t_p).is_none() {
            return bad("duration must be a positive multiple of t_p");
        }
        if !(self.omega0 >= 0.0) {
            return bad("omega0 must be nonnegative");
        }
        if !(self.u_r >= 0.0) {
            return bad("u_r must be nonnegative");
        }
        if !(self.converge_band > 0.0) {
            return bad("converge_band must be positive");
        }
        if !self.constraints.is_valid() {
            return bad("input constraints are inconsistent");
        }
        if let PathSpec::Polynomial { x, y } = &self.path {
            if x.is_empty() || y.is_empty() {
                return bad("polynomial path needs coefficients for both axes");
            }
        }
        sample_path(&self.path.build(), self.omega0)?;
        if let Some(u) = &self.initial_command {
            if !self.constraints.in_box(u) {
                return bad("initial_command lies outside the input box");
            }
        }
        self.nmpc_config().validate()?;
        Ok(())
    }

    /// Predictive-law configuration without the terminal weight filled in
    /// unless it was given explicitly.
    pub fn nmpc_config(&self) -> NmpcConfig {
        let p = &self.predictive;
        NmpcConfig {
            horizon: p.horizon,
            q: Vector3::from(p.q),
            r: Vector3::from(p.r),
            terminal_weight: p.terminal_weight.map(|rows| Matrix3::from_fn(|i, j| rows[i][j])),
            lambda: p.lambda,
            u_ref: InputCmd::new(self.u_r, 0.0, self.u_r),
            constraints: self.constraints,
            t_m: self.t_m,
            max_iterations: p.max_iterations,
            kkt_tol: p.kkt_tol,
        }
    }

    pub fn initial_command(&self) -> Result<InputCmd, SimError> {
        match self.initial_command {
            Some(u) => Ok(u),
            None => {
                let phi = sample_path(&self.path.build(), self.omega0)?.phi_p;
                Ok(InputCmd::new(0.0, phi, self.constraints.eps))
            }
        }
    }

    /// Nominal case-study run: ideal low-level tracking, sinusoidal sway.
    pub fn case_study_nominal(law: Law) -> Self {
        Self {
            name: "case-study-nominal".into(),
            path: PathSpec::CaseStudy,
            initial_pose: InitialPose { x: 10.0, y: 10.0, psi: None },
            omega0: 2.5,
            u_r: 0.15,
            t_m: 1.0,
            t_p: 0.1,
            duration: 400.0,
            law,
            predictive: PredictiveParams::default(),
            sglos: SglosParams::default(),
            constraints: InputConstraints::default(),
            disturbance: DisturbanceSpec::Sinusoid { amplitude: 0.15, period: 60.0, phase: 0.0 },
            filter: FilterSpec::default(),
            initial_command: None,
            converge_band: 0.1,
        }
    }

    /// Case study with low-level dynamics and frequency-varying sway.
    pub fn case_study_realistic(law: Law) -> Self {
        Self {
            name: "case-study-realistic".into(),
            disturbance: DisturbanceSpec::ChirpMirror { amplitude: 0.15, f0: 1.0 / 60.0, f1: 1.0 / 30.0, switch_time: 200.0 },
            filter: FilterSpec { enabled: true, params: FilterParams::default() },
            ..Self::case_study_nominal(law)
        }
    }
}
