//! Nonlinear receding-horizon guidance.
//!
//! The horizon cost is `Σ ℓ(x_j, u_j) + λ·V_f(x_N)` over the forward-Euler
//! prediction with the sway velocity held at its last measurement. Inputs
//! are bounded by the box and rate sets of [`InputConstraints`]. The problem
//! is solved by SQP on the absolute inputs with a Gauss-Newton Hessian and a
//! backtracking line search on the cost itself; since every constraint is
//! linear in the inputs, every iterate stays feasible.

use alloc::vec::Vec;

use libm::sqrt;
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};

use crate::angle::{angle_diff, wrap_angle};
use crate::los::{clamp_inputs, sglos, InputConstraints, SglosParams};
use crate::model::{euler_step, GuidanceState, InputCmd};
use crate::path::{omega_of_z, sample_path, Path};
use crate::pnmpc::prediction_sensitivity;
use crate::qp::{solve_qp, QpProblem, QpSolution};
use crate::{GuidanceError, Result};

/// Horizon, weights and bounds of the receding-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NmpcConfig {
    pub horizon: usize,
    /// Diagonal of the state weight `Q`.
    pub q: Vector3<f64>,
    /// Diagonal of the input-deviation weight `R`.
    pub r: Vector3<f64>,
    /// Terminal weight `P`; see [`synthesize_terminal_weight`].
    pub terminal_weight: Option<Matrix3<f64>>,
    pub lambda: f64,
    pub u_ref: InputCmd,
    pub constraints: InputConstraints,
    /// Guidance (prediction) period in seconds.
    pub t_m: f64,
    pub max_iterations: usize,
    pub kkt_tol: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            q: Vector3::new(1.0, 1.0, 1e-5),
            r: Vector3::new(10.0, 1e-5, 1e-5),
            terminal_weight: None,
            lambda: 1.1,
            u_ref: InputCmd::new(0.15, 0.0, 0.15),
            constraints: InputConstraints::default(),
            t_m: 1.0,
            max_iterations: 30,
            kkt_tol: 1e-6,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(GuidanceError::InvalidConfig("horizon must be at least one step"));
        }
        if !(self.q[0] > 0.0 && self.q[1] > 0.0 && self.q[2] >= 0.0) || self.r.iter().any(|&r| !(r >= 0.0)) {
            return Err(GuidanceError::InvalidConfig("weights must be nonnegative, positive on x_e and y_e"));
        }
        if !(self.lambda >= 1.0) {
            return Err(GuidanceError::InvalidConfig("lambda must be at least one"));
        }
        if !(self.t_m > 0.0) {
            return Err(GuidanceError::InvalidConfig("guidance period must be positive"));
        }
        if !self.constraints.is_valid() {
            return Err(GuidanceError::InvalidConfig("input constraints are inconsistent"));
        }
        if let Some(p) = self.terminal_weight {
            if (p - p.transpose()).amax() > 1e-9 * p.amax() || p.cholesky().is_none() {
                return Err(GuidanceError::InvalidConfig("terminal weight must be symmetric positive definite"));
            }
        }
        Ok(())
    }

    /// Same configuration with `P` synthesized for the SGLOS terminal law.
    pub fn with_terminal_weight<P: Path + ?Sized>(mut self, path: &P, sglos: &SglosParams) -> Result<Self> {
        self.terminal_weight = Some(synthesize_terminal_weight(path, &self, sglos)?.p);
        Ok(self)
    }
}

/// `xᵀQx + (u − u_ref)ᵀR(u − u_ref)` with the heading deviation wrapped.
pub fn stage_cost(x: &GuidanceState, u: &InputCmd, cfg: &NmpcConfig) -> f64 {
    let d = Vector3::new(u.u - cfg.u_ref.u, angle_diff(u.psi, cfg.u_ref.psi), u.u_tar - cfg.u_ref.u_tar);
    let xv = x.to_vector();
    xv.component_mul(&xv).dot(&cfg.q) + d.component_mul(&d).dot(&cfg.r)
}

/// `xᵀPx`.
pub fn terminal_cost(x: &GuidanceState, cfg: &NmpcConfig) -> Result<f64> {
    let p = cfg.terminal_weight.ok_or(GuidanceError::TerminalWeightUnset)?;
    let xv = x.to_vector();
    Ok(xv.dot(&(p * xv)))
}

/// States `x_0 … x_N` under `u_seq`, sway held at `v`.
pub fn predict<P: Path + ?Sized>(
    x0: &GuidanceState,
    u_seq: &[InputCmd],
    v: f64,
    cfg: &NmpcConfig,
    path: &P,
) -> Result<Vec<GuidanceState>> {
    let mut out = Vec::with_capacity(u_seq.len() + 1);
    out.push(*x0);
    for u in u_seq {
        let next = euler_step(out.last().unwrap(), u, v, cfg.t_m, path)?;
        out.push(next);
    }
    Ok(out)
}

fn cost_of_states(states: &[GuidanceState], u_seq: &[InputCmd], cfg: &NmpcConfig) -> Result<f64> {
    let running: f64 = states.iter().zip(u_seq).map(|(x, u)| stage_cost(x, u, cfg)).sum();
    Ok(running + cfg.lambda * terminal_cost(states.last().unwrap(), cfg)?)
}

/// `J_N = Σ_{j<N} ℓ(x_j, u_j) + λ·V_f(x_N)` on the predicted trajectory.
pub fn horizon_cost<P: Path + ?Sized>(
    x0: &GuidanceState,
    u_seq: &[InputCmd],
    v: f64,
    cfg: &NmpcConfig,
    path: &P,
) -> Result<f64> {
    cost_of_states(&predict(x0, u_seq, v, cfg, path)?, u_seq, cfg)
}

/// Linearisation of the terminal loop and its Lyapunov weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSynthesis {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    /// Terminal-law gain, `∂κ_f/∂x`.
    pub k: Matrix3<f64>,
    pub p: Matrix3<f64>,
    pub spectral_radius: f64,
}

/// Operating point of the terminal-weight synthesis.
pub const SYNTHESIS_Z: f64 = 1e-2;
const SYNTHESIS_STEP: f64 = 1e-6;

/// Linearises the Euler model and the SGLOS law about `z = 0.01` on the path
/// (inputs at a tenth of the reference speeds) and solves
/// `A_Kᵀ P A_K − P = −(Q + KᵀRK)` with `A_K = A + BK`.
pub fn synthesize_terminal_weight<P: Path + ?Sized>(
    path: &P,
    cfg: &NmpcConfig,
    sglos_params: &SglosParams,
) -> Result<TerminalSynthesis> {
    let x_bar = GuidanceState::new(0.0, 0.0, SYNTHESIS_Z);
    let phi = sample_path(path, omega_of_z(SYNTHESIS_Z)?)?.phi_p;
    let u_bar = InputCmd::new(0.1 * cfg.u_ref.u, phi, 0.1 * cfg.u_ref.u_tar);
    let h = SYNTHESIS_STEP;

    let step = |x: &Vector3<f64>, u: &Vector3<f64>| -> Result<Vector3<f64>> {
        let next = euler_step(&GuidanceState::from_vector(x), &InputCmd::from_vector(u), 0.0, cfg.t_m, path)?;
        Ok(next.to_vector())
    };
    let xb = x_bar.to_vector();
    let ub = u_bar.to_vector();
    let mut a = Matrix3::zeros();
    let mut b = Matrix3::zeros();
    let mut k = Matrix3::zeros();
    for c in 0..3 {
        let e = Vector3::ith(c, h);
        a.set_column(c, &((step(&(xb + e), &ub)? - step(&(xb - e), &ub)?) / (2.0 * h)));
        b.set_column(c, &((step(&xb, &(ub + e))? - step(&xb, &(ub - e))?) / (2.0 * h)));
        let hi = sglos(&GuidanceState::from_vector(&(xb + e)), path, sglos_params)?;
        let lo = sglos(&GuidanceState::from_vector(&(xb - e)), path, sglos_params)?;
        let d = Vector3::new(hi.u - lo.u, angle_diff(hi.psi, lo.psi), hi.u_tar - lo.u_tar);
        k.set_column(c, &(d / (2.0 * h)));
    }

    let a_k = a + b * k;
    let rho = spectral_radius(&a_k);
    if !(rho < 1.0) {
        return Err(GuidanceError::UnstableTerminalLoop { spectral_radius: rho });
    }
    let w = Matrix3::from_diagonal(&cfg.q) + k.transpose() * Matrix3::from_diagonal(&cfg.r) * k;
    let p = solve_discrete_lyapunov(&a_k, &w).ok_or(GuidanceError::UnstableTerminalLoop { spectral_radius: rho })?;
    Ok(TerminalSynthesis { a, b, k, p, spectral_radius: rho })
}

/// Solves `AᵀPA − P = −W` through its Kronecker form.
pub fn solve_discrete_lyapunov<const D: usize>(a: &SMatrix<f64, D, D>, w: &SMatrix<f64, D, D>) -> Option<SMatrix<f64, D, D>> {
    let at = DMatrix::from_column_slice(D, D, a.transpose().as_slice());
    let lhs = DMatrix::identity(D * D, D * D) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(w.as_slice());
    let vec_p = lhs.lu().solve(&rhs)?;
    let p = SMatrix::<f64, D, D>::from_column_slice(vec_p.as_slice());
    Some((p + p.transpose()) * 0.5)
}

/// Largest eigenvalue modulus of a 3×3 matrix.
pub fn spectral_radius(m: &Matrix3<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| sqrt(c.re * c.re + c.im * c.im)).fold(0.0, f64::max)
}

/// Outcome of one guidance solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Input sequence, headings wrapped; `u_seq[0]` is applied.
    pub u_seq: Vec<InputCmd>,
    /// Predicted states `x_0 … x_N` under `u_seq`.
    pub x_pred: Vec<GuidanceState>,
    pub j_opt: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Wall-clock seconds; left at zero here, filled in by callers that own a clock.
    pub solve_time: f64,
    /// `false` when an iteration cap or stalled line search ended the solve.
    pub converged: bool,
}

impl SolveResult {
    /// Tail of the sequence with the last input repeated: a warm start for
    /// the next guidance step.
    pub fn shifted(&self) -> Vec<InputCmd> {
        let mut out: Vec<InputCmd> = self.u_seq.iter().skip(1).copied().collect();
        if let Some(last) = self.u_seq.last() {
            out.push(*last);
        }
        out
    }
}

/// Absolute inputs with headings unwrapped along the chain from `prev`.
pub(crate) fn unwrap_sequence(seq: &[InputCmd], prev: &InputCmd) -> Vec<Vector3<f64>> {
    let mut last = prev.psi;
    seq.iter()
        .map(|u| {
            last += angle_diff(u.psi, last);
            Vector3::new(u.u, last, u.u_tar)
        })
        .collect()
}

/// Stacked `u_j − u_ref` with wrapped heading deviation.
pub(crate) fn stack_reference_deviation(seq: &[Vector3<f64>], u_ref: &InputCmd) -> DVector<f64> {
    DVector::from_fn(3 * seq.len(), |r, _| {
        let u = &seq[r / 3];
        match r % 3 {
            0 => u[0] - u_ref.u,
            1 => angle_diff(u[1], u_ref.psi),
            _ => u[2] - u_ref.u_tar,
        }
    })
}

/// Linear rows bounding a step `d` on the stacked absolute inputs `base`:
/// surge and target-speed boxes, then surge and heading rates (the first
/// rate row links to `prev`).
pub(crate) fn input_rows(
    base: &[Vector3<f64>],
    prev: &InputCmd,
    c: &InputConstraints,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = base.len();
    let mut a = DMatrix::zeros(4 * n, 3 * n);
    let mut lb = DVector::zeros(4 * n);
    let mut ub = DVector::zeros(4 * n);
    for j in 0..n {
        let r = 4 * j;
        a[(r, 3 * j)] = 1.0;
        lb[r] = -base[j][0];
        ub[r] = c.u_max - base[j][0];

        a[(r + 1, 3 * j + 2)] = 1.0;
        lb[r + 1] = c.eps - base[j][2];
        ub[r + 1] = c.u_tar_max - base[j][2];

        let before = if j == 0 { Vector3::new(prev.u, prev.psi, prev.u_tar) } else { base[j - 1] };
        let gap = base[j] - before;
        a[(r + 2, 3 * j)] = 1.0;
        a[(r + 3, 3 * j + 1)] = 1.0;
        if j > 0 {
            a[(r + 2, 3 * (j - 1))] = -1.0;
            a[(r + 3, 3 * (j - 1) + 1)] = -1.0;
        }
        lb[r + 2] = -c.du_max - gap[0];
        ub[r + 2] = c.du_max - gap[0];
        lb[r + 3] = -c.dpsi_max - gap[1];
        ub[r + 3] = c.dpsi_max - gap[1];
    }
    (a, lb, ub)
}

/// Snaps an (unwrapped, feasible up to rounding) sequence onto the input
/// sets exactly and evaluates it.
pub(crate) fn finalize<P: Path + ?Sized>(
    x_k: &GuidanceState,
    seq: &[Vector3<f64>],
    v: f64,
    prev: &InputCmd,
    cfg: &NmpcConfig,
    path: &P,
) -> Result<SolveResult> {
    let mut last = *prev;
    let u_seq: Vec<InputCmd> = seq
        .iter()
        .map(|s| {
            let raw = InputCmd::new(s[0], wrap_angle(s[1]), s[2]);
            last = clamp_inputs(&raw, &last, &cfg.constraints);
            last
        })
        .collect();
    let x_pred = predict(x_k, &u_seq, v, cfg, path)?;
    let j_opt = cost_of_states(&x_pred, &u_seq, cfg)?;
    Ok(SolveResult { u_seq, x_pred, j_opt, iterations: 0, kkt_residual: 0.0, solve_time: 0.0, converged: true })
}

fn admissible_chain(seq: &[InputCmd], prev: &InputCmd, c: &InputConstraints) -> bool {
    let mut last = prev;
    seq.iter().all(|u| {
        let ok = c.admits(last, u);
        last = u;
        ok
    })
}

/// SQP solver for the receding-horizon problem.
#[derive(Debug, Clone)]
pub struct NmpcSolver {
    cfg: NmpcConfig,
    qp_warm: Option<QpSolution>,
}

impl NmpcSolver {
    pub fn new(cfg: NmpcConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.terminal_weight.is_none() {
            return Err(GuidanceError::TerminalWeightUnset);
        }
        Ok(Self { cfg, qp_warm: None })
    }

    pub fn config(&self) -> &NmpcConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.qp_warm = None;
    }

    /// Solves at state `x_k` with sway `v_k`, given the input applied last.
    ///
    /// `warm` seeds the iteration with an input sequence (typically
    /// [`SolveResult::shifted`] of the previous solve); the constant hold of
    /// `u_prev` is always a candidate, so the result is never worse than it.
    pub fn solve<P: Path + ?Sized>(
        &mut self,
        x_k: &GuidanceState,
        v_k: f64,
        u_prev: &InputCmd,
        warm: Option<&[InputCmd]>,
        path: &P,
    ) -> Result<SolveResult> {
        let cfg = &self.cfg;
        let c = &cfg.constraints;
        if !c.in_box(u_prev) {
            return Err(GuidanceError::InfeasibleStart);
        }
        let n = cfg.horizon;
        let hold: Vec<InputCmd> = core::iter::repeat_n(*u_prev, n).collect();
        let mut incumbent = hold.clone();
        let mut best = horizon_cost(x_k, &hold, v_k, cfg, path)?;
        if let Some(w) = warm.filter(|w| w.len() == n && admissible_chain(w, u_prev, c)) {
            if let Ok(cost) = horizon_cost(x_k, w, v_k, cfg, path) {
                if cost < best {
                    best = cost;
                    incumbent = w.to_vec();
                }
            }
        }

        let mut u = unwrap_sequence(&incumbent, u_prev);
        let mut cost = best;
        let mut qp_warm = self.qp_warm.take();
        let mut kkt = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        let p = cfg.terminal_weight.ok_or(GuidanceError::TerminalWeightUnset)?;
        let r_bar = DVector::from_fn(3 * n, |r, _| cfg.r[r % 3]);

        while iterations < cfg.max_iterations {
            iterations += 1;
            let cmds: Vec<InputCmd> = u.iter().map(InputCmd::from_vector).collect();
            let (states, s) = prediction_sensitivity(x_k, &cmds, v_k, cfg.t_m, path)?;

            // Weighted predicted states and their Gauss-Newton curvature.
            let mut w = DMatrix::zeros(3 * n, 3 * n);
            let mut y = DVector::zeros(3 * n);
            for i in 0..n {
                let block = if i + 1 == n { p * cfg.lambda } else { Matrix3::from_diagonal(&cfg.q) };
                w.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&block);
                y.fixed_rows_mut::<3>(3 * i).copy_from(&states[i + 1].to_vector());
            }
            let stw = s.transpose() * &w;
            let mut h = (&stw * &s) * 2.0 + DMatrix::from_diagonal(&r_bar) * 2.0;
            h = (&h + h.transpose()) * 0.5;
            let dev = stack_reference_deviation(&u, &cfg.u_ref);
            let grad = (&stw * &y) * 2.0 + dev.component_mul(&r_bar) * 2.0;

            let (a, lb, ub) = input_rows(&u, u_prev, c);
            let qp = QpProblem::new(h, grad.clone(), a, lb.clone(), ub.clone())?;
            let sol = solve_qp(&qp, qp_warm.as_ref())?;
            let d = sol.x.clone();

            // Stationarity of the NLP at the current inputs equals −Hd for
            // the QP multipliers; complementarity is measured at d = 0.
            let stationarity = (&qp.h * &d).amax();
            let mut complementarity: f64 = 0.0;
            for (i, &mu) in sol.multipliers.iter().enumerate() {
                let slack = if mu > 0.0 { -lb[i] } else if mu < 0.0 { ub[i] } else { 0.0 };
                complementarity = complementarity.max((mu * slack).abs());
            }
            kkt = stationarity.max(complementarity);
            qp_warm = Some(sol);
            if kkt <= cfg.kkt_tol || d.amax() <= 1e-12 {
                converged = true;
                break;
            }

            let slope = grad.dot(&d);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<Vector3<f64>> =
                    u.iter().enumerate().map(|(j, uj)| uj + d.fixed_rows::<3>(3 * j) * alpha).collect();
                let trial_cmds: Vec<InputCmd> = trial.iter().map(InputCmd::from_vector).collect();
                if let Ok(tc) = horizon_cost(x_k, &trial_cmds, v_k, cfg, path) {
                    if tc <= cost + 1e-4 * alpha * slope {
                        accepted = Some((trial, tc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, tc)) => {
                    u = trial;
                    cost = tc;
                }
                None => break,
            }
        }

        self.qp_warm = qp_warm;
        let mut out = finalize(x_k, &u, v_k, u_prev, cfg, path)?;
        // Snapping moves inputs by a few ulps at most; never hand back a
        // sequence that is worse than the start.
        if out.j_opt > best {
            out = finalize(x_k, &unwrap_sequence(&incumbent, u_prev), v_k, u_prev, cfg, path)?;
        }
        out.iterations = iterations;
        out.kkt_residual = kkt;
        out.converged = converged;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{z_of_omega, CaseStudyPath, LinePath};

    fn cfg() -> NmpcConfig {
        NmpcConfig::default().with_terminal_weight(&CaseStudyPath, &SglosParams::default()).unwrap()
    }

    #[test]
    fn stage_cost_examples() {
        let c = NmpcConfig::default();
        assert_eq!(stage_cost(&GuidanceState::default(), &c.u_ref, &c), 0.0);
        let x = GuidanceState::new(1.0, 1.0, 0.01);
        let u = InputCmd::new(0.2, 0.1, 0.2);
        assert!((stage_cost(&x, &u, &c) - 2.025_000_126).abs() < 1e-12);
        let x2 = GuidanceState::new(2.0, 2.0, 0.02);
        let state_part = |x: &GuidanceState| stage_cost(x, &c.u_ref, &c);
        assert!((state_part(&x2) - 4.0 * state_part(&x)).abs() < 1e-12);
    }

    #[test]
    fn terminal_cost_examples() {
        let mut c = NmpcConfig::default();
        assert_eq!(terminal_cost(&GuidanceState::default(), &c), Err(GuidanceError::TerminalWeightUnset));
        c.terminal_weight = Some(Matrix3::identity());
        assert_eq!(terminal_cost(&GuidanceState::new(1.0, 2.0, 3.0), &c).unwrap(), 14.0);
        let c = cfg();
        let x = GuidanceState::new(0.3, -0.2, 0.1);
        assert_eq!(terminal_cost(&x, &c).unwrap(), terminal_cost(&GuidanceState::new(-0.3, 0.2, -0.1), &c).unwrap());
        assert_eq!(terminal_cost(&GuidanceState::default(), &c).unwrap(), 0.0);
    }

    #[test]
    fn scalar_lyapunov_examples() {
        let one = |a: f64, w: f64| solve_discrete_lyapunov(&SMatrix::<f64, 1, 1>::new(a), &SMatrix::<f64, 1, 1>::new(w)).unwrap()[0];
        assert_eq!(one(0.0, 1.0), 1.0);
        assert!((one(0.5, 1.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_matches_series() {
        // P = Σ (Aᵀ)^k W A^k for a Schur-stable A.
        let a = Matrix3::new(0.5, 0.2, 0.0, -0.1, 0.3, 0.4, 0.0, 0.05, 0.7);
        let w = Matrix3::new(2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 0.5);
        let p = solve_discrete_lyapunov(&a, &w).unwrap();
        let mut sum = Matrix3::<f64>::zeros();
        let mut ak = Matrix3::<f64>::identity();
        for _ in 0..400 {
            sum += ak.transpose() * w * ak;
            ak *= a;
        }
        assert!((p - sum).amax() < 1e-12);
    }

    #[test]
    fn case_study_terminal_weight() {
        let s = synthesize_terminal_weight(&CaseStudyPath, &NmpcConfig::default(), &SglosParams::default()).unwrap();
        assert!(s.spectral_radius < 1.0);
        assert!(s.p.cholesky().is_some());
        let a_k = s.a + s.b * s.k;
        let w = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1e-5))
            + s.k.transpose() * Matrix3::from_diagonal(&Vector3::new(10.0, 1e-5, 1e-5)) * s.k;
        assert!((a_k.transpose() * s.p * a_k - s.p + w).amax() < 1e-9);
    }

    #[test]
    fn line_equilibrium_is_kept() {
        let c = NmpcConfig::default().with_terminal_weight(&LinePath::default(), &SglosParams::default()).unwrap();
        let mut solver = NmpcSolver::new(c.clone()).unwrap();
        let x = GuidanceState::new(0.0, 0.0, z_of_omega(99.0).unwrap());
        let u = InputCmd::new(0.15, 0.0, 0.15);
        let out = solver.solve(&x, 0.0, &u, None, &LinePath::default()).unwrap();
        for cmd in &out.u_seq {
            assert!((cmd.to_vector() - u.to_vector()).amax() < 1e-8, "{cmd:?}");
        }
        // Only the z terms remain, λ·P_zz·z² ≈ 2e-6.
        assert!(out.j_opt < 1e-5);
        assert!((out.j_opt - horizon_cost(&x, &[u; 3], 0.0, &c, &LinePath::default()).unwrap()).abs() < 1e-15);
        // No nearby feasible perturbation does better.
        let steps = [-0.01, 0.0, 0.01];
        for &du in &steps {
            for &dp in &steps {
                for &dt in &steps {
                    let seq = [InputCmd::new(0.15 + du, dp, 0.15 + dt); 3];
                    assert!(horizon_cost(&x, &seq, 0.0, &c, &LinePath::default()).unwrap() >= out.j_opt - 1e-12);
                }
            }
        }
    }

    #[test]
    fn output_is_feasible_and_not_worse_than_hold() {
        let c = cfg();
        let mut solver = NmpcSolver::new(c.clone()).unwrap();
        let pt = sample_path(&CaseStudyPath, 2.5).unwrap();
        let x = GuidanceState::new(1.377_470_671_488_718, 5.853_194_685_483_319, 1.0 / 3.5);
        let prev = InputCmd::new(0.0, pt.phi_p, 0.01);
        let out = solver.solve(&x, 0.0, &prev, None, &CaseStudyPath).unwrap();
        assert!(admissible_chain(&out.u_seq, &prev, &c.constraints));
        let hold = [prev; 3];
        assert!(out.j_opt <= horizon_cost(&x, &hold, 0.0, &c, &CaseStudyPath).unwrap());
        assert!(out.j_opt >= stage_cost(&x, &out.u_seq[0], &c));
        assert_eq!(out.x_pred, predict(&x, &out.u_seq, 0.0, &c, &CaseStudyPath).unwrap());
    }

    #[test]
    fn warm_restart_does_not_increase_cost() {
        let c = cfg();
        let mut solver = NmpcSolver::new(c).unwrap();
        let x = GuidanceState::new(-0.8, 1.5, 0.1);
        let prev = InputCmd::new(0.1, 0.4, 0.12);
        let cold = solver.solve(&x, 0.05, &prev, None, &CaseStudyPath).unwrap();
        let again = solver.solve(&x, 0.05, &prev, Some(&cold.u_seq), &CaseStudyPath).unwrap();
        assert!(again.j_opt <= cold.j_opt + 1e-8);
    }

    #[test]
    fn single_step_vertex() {
        // With N = 1 and a tight rate box, only the corners of the rate set
        // are candidates once the optimum lies outside it.
        let mut c = cfg();
        c.horizon = 1;
        c.constraints.du_max = 1e-3;
        c.constraints.dpsi_max = 1e-3;
        c.constraints.u_tar_max = 0.0101;
        let x = GuidanceState::new(0.0, 3.0, 0.1);
        let prev = InputCmd::new(0.1, 0.0, 0.0101);
        let out = NmpcSolver::new(c.clone()).unwrap().solve(&x, 0.0, &prev, None, &CaseStudyPath).unwrap();
        let mut best = (f64::INFINITY, InputCmd::default());
        for su in [-1.0, 1.0] {
            for sp in [-1.0, 1.0] {
                for t in [0.01, 0.0101] {
                    let cand = InputCmd::new(0.1 + su * 1e-3, sp * 1e-3, t);
                    let j = horizon_cost(&x, &[cand], 0.0, &c, &CaseStudyPath).unwrap();
                    if j < best.0 {
                        best = (j, cand);
                    }
                }
            }
        }
        assert!((out.u_seq[0].to_vector() - best.1.to_vector()).amax() < 1e-9, "{:?} vs {:?}", out.u_seq[0], best.1);
    }

    #[test]
    fn rejects_infeasible_previous_input() {
        let mut solver = NmpcSolver::new(cfg()).unwrap();
        let bad = InputCmd::new(0.3, 0.0, 0.1);
        let r = solver.solve(&GuidanceState::new(0.0, 0.0, 0.5), 0.0, &bad, None, &CaseStudyPath);
        assert_eq!(r, Err(GuidanceError::InfeasibleStart));
    }
}
