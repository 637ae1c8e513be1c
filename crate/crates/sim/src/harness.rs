//! Multirate closed loop: guidance every `t_m`, plant and low-level filters
//! every `t_p`.

use std::time::Instant;

use serde::Serialize;
use usv_guidance::angle::angle_diff;
use usv_guidance::filter::LowLevelFilter;
use usv_guidance::los::{clamp_inputs, sglos};
use usv_guidance::model::compute_errors;
use usv_guidance::nmpc::synthesize_terminal_weight;
use usv_guidance::path::{sample_path, z_of_omega};
use usv_guidance::{
    AnyPath, GuidanceError, GuidanceState, InputCmd, InputConstraints, NmpcSolver, PnmpcSolver, SglosParams,
    VesselPose,
};

use crate::scenario::{Law, Scenario};
use crate::SimError;

/// Closed-loop sample at one plant instant. Guidance-only fields hold the
/// values of the most recent guidance step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Commanded heading, wrapped.
    pub psi_cmd: f64,
    /// Actual heading, continuous.
    pub psi_act: f64,
    pub u_cmd: f64,
    pub u_act: f64,
    pub u_tar: f64,
    pub v: f64,
    pub omega: f64,
    pub z: f64,
    pub x_e: f64,
    pub y_e: f64,
    pub j_opt: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub solve_time: f64,
    /// A guidance solve happened at this instant.
    pub guidance: bool,
}

impl Record {
    pub fn state(&self) -> GuidanceState {
        GuidanceState::new(self.x_e, self.y_e, self.z)
    }

    pub fn command(&self) -> InputCmd {
        InputCmd::new(self.u_cmd, self.psi_cmd, self.u_tar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub law: Law,
    pub t_p: f64,
    pub constraints: InputConstraints,
    /// Command in force before the first guidance step.
    pub initial_command: InputCmd,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn guidance_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.guidance)
    }
}

enum Controller {
    Nmpc { solver: NmpcSolver, warm: Option<Vec<InputCmd>> },
    Pnmpc(PnmpcSolver),
    Sglos(SglosParams),
}

struct Decision {
    cmd: InputCmd,
    j_opt: f64,
    kkt_residual: f64,
    iterations: usize,
    solve_time: f64,
}

impl Controller {
    fn new(sc: &Scenario, path: &AnyPath) -> Result<Self, SimError> {
        if sc.law == Law::Sglos {
            return Ok(Controller::Sglos(sc.sglos));
        }
        let mut cfg = sc.nmpc_config();
        if cfg.terminal_weight.is_none() {
            cfg.terminal_weight = Some(synthesize_terminal_weight(path, &cfg, &sc.sglos)?.p);
        }
        Ok(match sc.law {
            Law::Nmpc => Controller::Nmpc { solver: NmpcSolver::new(cfg)?, warm: None },
            _ => Controller::Pnmpc(PnmpcSolver::new(cfg)?),
        })
    }

    fn decide(
        &mut self,
        x: &GuidanceState,
        v: f64,
        prev: &InputCmd,
        constraints: &InputConstraints,
        path: &AnyPath,
    ) -> Result<Decision, GuidanceError> {
        let start = Instant::now();
        let (cmd, j_opt, kkt_residual, iterations) = match self {
            Controller::Sglos(params) => {
                let raw = sglos(x, path, params)?;
                (clamp_inputs(&raw, prev, constraints), f64::NAN, f64::NAN, 0)
            }
            Controller::Nmpc { solver, warm } => {
                let res = solver.solve(x, v, prev, warm.as_deref(), path)?;
                *warm = Some(res.shifted());
                (res.u_seq[0], res.j_opt, res.kkt_residual, res.iterations)
            }
            Controller::Pnmpc(solver) => {
                let res = solver.solve(x, v, prev, path)?;
                (res.u_seq[0], res.j_opt, res.kkt_residual, res.iterations)
            }
        };
        let solve_time = start.elapsed().as_secs_f64();
        Ok(Decision { cmd, j_opt, kkt_residual, iterations, solve_time })
    }
}

/// Plant state integrated between guidance instants.
#[derive(Debug, Clone, Copy)]
struct Plant {
    x: f64,
    y: f64,
    omega: f64,
}

/// Actuated surge and heading, linear over one plant step.
#[derive(Debug, Clone, Copy)]
struct Actuation {
    u0: f64,
    u1: f64,
    psi0: f64,
    psi1: f64,
}

impl Actuation {
    fn at(&self, s: f64) -> (f64, f64) {
        (self.u0 + s * (self.u1 - self.u0), self.psi0 + s * (self.psi1 - self.psi0))
    }
}

fn plant_rate(p: &Plant, t: f64, act: &Actuation, s: f64, u_tar: f64, sc: &Scenario, path: &AnyPath) -> Result<Plant, GuidanceError> {
    let (u, psi) = act.at(s);
    let v = sc.disturbance.sample(t);
    let f = sample_path(path, p.omega)?.speed_factor;
    let (c, sn) = (psi.cos(), psi.sin());
    Ok(Plant { x: u * c - v * sn, y: u * sn + v * c, omega: u_tar / f })
}

/// Classical fourth-order Runge-Kutta step for pose and path variable.
fn rk4(p: &Plant, t: f64, dt: f64, act: &Actuation, u_tar: f64, sc: &Scenario, path: &AnyPath) -> Result<Plant, GuidanceError> {
    let add = |a: &Plant, k: &Plant, h: f64| Plant { x: a.x + h * k.x, y: a.y + h * k.y, omega: a.omega + h * k.omega };
    let k1 = plant_rate(p, t, act, 0.0, u_tar, sc, path)?;
    let k2 = plant_rate(&add(p, &k1, dt / 2.0), t + dt / 2.0, act, 0.5, u_tar, sc, path)?;
    let k3 = plant_rate(&add(p, &k2, dt / 2.0), t + dt / 2.0, act, 0.5, u_tar, sc, path)?;
    let k4 = plant_rate(&add(p, &k3, dt), t + dt, act, 1.0, u_tar, sc, path)?;
    let next = Plant {
        x: p.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: p.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        omega: p.omega + dt / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega),
    };
    if !(next.x.is_finite() && next.y.is_finite() && next.omega.is_finite()) {
        return Err(GuidanceError::StateEscape);
    }
    Ok(next)
}

/// Runs `sc` to completion. Deterministic apart from the measured solve times.
pub fn run_scenario(sc: &Scenario) -> Result<Trace, SimError> {
    sc.validate()?;
    let path = sc.path.build();
    let c = sc.constraints;
    let dt = sc.t_p;
    let per_guidance = sc.steps_per_guidance();
    let steps = sc.plant_steps();

    let initial = sc.initial_command()?;
    let psi0 = match sc.initial_pose.psi {
        Some(psi) => psi,
        None => sample_path(&path, sc.omega0)?.phi_p,
    };
    let mut controller = Controller::new(sc, &path)?;

    let mut plant = Plant { x: sc.initial_pose.x, y: sc.initial_pose.y, omega: sc.omega0 };
    let mut prev = initial;
    // Commanded heading on the branch closest to the actual heading.
    let mut psi_cmd_cont = psi0 + angle_diff(initial.psi, psi0);
    let (mut u_act, mut psi_act) = (initial.u, if sc.filter.enabled { psi0 } else { psi_cmd_cont });
    let mut filters = if sc.filter.enabled {
        let u_f = LowLevelFilter::new(sc.filter.params, dt, u_act)?;
        let psi_f = LowLevelFilter::new(sc.filter.params, dt, psi_act)?;
        Some((u_f, psi_f))
    } else {
        None
    };

    let mut last = Decision { cmd: initial, j_opt: f64::NAN, kkt_residual: f64::NAN, iterations: 0, solve_time: 0.0 };
    let mut records = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let fail = |source| SimError::Step { step: k, source };
        let pose = VesselPose { x: plant.x, y: plant.y, psi: psi_act };
        let (x_e, y_e) = compute_errors(&pose, plant.omega, &path).map_err(fail)?;
        let z = z_of_omega(plant.omega).map_err(fail)?;
        let v = sc.disturbance.sample(t);

        let guidance = k < steps && k % per_guidance == 0;
        if guidance {
            let x = GuidanceState::new(x_e, y_e, z);
            last = controller.decide(&x, v, &prev, &c, &path).map_err(fail)?;
            psi_cmd_cont += angle_diff(last.cmd.psi, prev.psi);
            prev = last.cmd;
        }

        records.push(Record {
            t,
            x: plant.x,
            y: plant.y,
            psi_cmd: last.cmd.psi,
            psi_act,
            u_cmd: last.cmd.u,
            u_act,
            u_tar: last.cmd.u_tar,
            v,
            omega: plant.omega,
            z,
            x_e,
            y_e,
            j_opt: last.j_opt,
            kkt_residual: last.kkt_residual,
            iterations: last.iterations,
            solve_time: last.solve_time,
            guidance,
        });
        if k == steps {
            break;
        }

        let (u_next, psi_next) = match filters.as_mut() {
            Some((u_f, psi_f)) => (u_f.step(last.cmd.u), psi_f.step(psi_cmd_cont)),
            None => (last.cmd.u, psi_cmd_cont),
        };
        let act = match filters {
            Some(_) => Actuation { u0: u_act, u1: u_next, psi0: psi_act, psi1: psi_next },
            None => Actuation { u0: u_next, u1: u_next, psi0: psi_next, psi1: psi_next },
        };
        plant = rk4(&plant, t, dt, &act, last.cmd.u_tar, sc, &path).map_err(fail)?;
        (u_act, psi_act) = (u_next, psi_next);
    }

    Ok(Trace {
        scenario: sc.name.clone(),
        law: sc.law,
        t_p: dt,
        constraints: c,
        initial_command: initial,
        records,
    })
}
