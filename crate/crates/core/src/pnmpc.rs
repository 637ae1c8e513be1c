//! Practical NMPC: the prediction is split into a free response (inputs held
//! at their last value) and a forced response that is linear in the future
//! input increments, so each guidance step is a single QP.
//!
//! The forced response uses one Jacobian of the error dynamics with respect
//! to the inputs, taken at the current operating point and held along the
//! horizon. The same module also provides exact prediction sensitivities,
//! which the SQP solver in [`crate::nmpc`] builds on.

use alloc::vec::Vec;

use libm::{cos, sin};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::angle::angle_diff;
use crate::model::{dynamics_at, GuidanceState, InputCmd};
use crate::nmpc::{
    finalize, horizon_cost, input_rows, predict, stack_reference_deviation, unwrap_sequence, NmpcConfig,
    SolveResult,
};
use crate::path::{sample_path, sample_unchecked, Path, PathPoint};
use crate::qp::{solve_qp, QpProblem, QpSolution};
use crate::{GuidanceError, Result};

/// `∂(ẋ_e, ẏ_e, ż) / ∂(u, ψ, u_tar)`; rows are state rates, columns inputs.
pub type JacobianBlock = Matrix3<f64>;

pub(crate) fn input_jacobian_at(x: &GuidanceState, u: &InputCmd, v: f64, pt: &PathPoint) -> JacobianBlock {
    let rel = angle_diff(u.psi, pt.phi_p);
    let (c, s) = (cos(rel), sin(rel));
    let kappa = pt.curvature();
    Matrix3::new(
        c,
        -u.u * s - v * c,
        kappa * x.y_e - 1.0,
        s,
        u.u * c - v * s,
        -kappa * x.x_e,
        0.0,
        0.0,
        -x.z * x.z / pt.speed_factor,
    )
}

/// Analytic input Jacobian of the error dynamics at `(x0, u0, v0)`.
pub fn jacobian_block<P: Path + ?Sized>(x0: &GuidanceState, u0: &InputCmd, v0: f64, path: &P) -> Result<JacobianBlock> {
    let pt = sample_path(path, x0.omega()?)?;
    Ok(input_jacobian_at(x0, u0, v0, &pt))
}

/// `∂(ẋ_e, ẏ_e, ż) / ∂(x_e, y_e, z)`.
///
/// The error columns are analytic. The `z` column moves the path point and
/// would need third path derivatives, so it is differenced centrally in `ω`.
pub fn state_jacobian<P: Path + ?Sized>(x: &GuidanceState, u: &InputCmd, v: f64, path: &P) -> Result<Matrix3<f64>> {
    let omega = x.omega()?;
    let pt = sample_path(path, omega)?;
    let kappa = pt.curvature();

    let h = 1e-6 * (1.0 + omega);
    let at = |w: f64| -> Result<Vector3<f64>> {
        let p = sample_unchecked(path, w)?;
        Ok(dynamics_at(&GuidanceState::new(x.x_e, x.y_e, 1.0 / (w + 1.0)), u, v, &p))
    };
    let d_omega = (at(omega + h)? - at(omega - h)?) / (2.0 * h);
    // dω/dz = −1/z²
    let d_z = d_omega * (-1.0 / (x.z * x.z));

    Ok(Matrix3::new(
        0.0,
        u.u_tar * kappa,
        d_z[0],
        -u.u_tar * kappa,
        0.0,
        d_z[1],
        0.0,
        0.0,
        d_z[2],
    ))
}

/// Block-Toeplitz map from horizon increments to predicted states.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub horizon: usize,
    pub matrix: DMatrix<f64>,
}

impl PredictionMatrix {
    /// Block `(i, j)`, zero-based, mapping increment `j` to state `i + 1`.
    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
    }
}

/// Lower block-triangular `G` with block `(i, j) = (i − j + 1)·T_m·J`.
pub fn assemble_g(j: &JacobianBlock, horizon: usize, t_m: f64) -> PredictionMatrix {
    let n = 3 * horizon;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..horizon {
        for k in 0..=i {
            let scale = (i - k + 1) as f64 * t_m;
            g.fixed_view_mut::<3, 3>(3 * i, 3 * k).copy_from(&(j * scale));
        }
    }
    PredictionMatrix { horizon, matrix: g }
}

/// Prediction with the last input held over the whole horizon.
pub fn free_response<P: Path + ?Sized>(
    x_k: &GuidanceState,
    u_prev: &InputCmd,
    v_k: f64,
    cfg: &NmpcConfig,
    path: &P,
) -> Result<Vec<GuidanceState>> {
    let held: Vec<InputCmd> = core::iter::repeat_n(*u_prev, cfg.horizon).collect();
    predict(x_k, &held, v_k, cfg, path)
}

/// Predicted states `x_0 … x_N` and the exact sensitivity of the stacked
/// `x_1 … x_N` to the stacked absolute inputs `u_0 … u_{N−1}`.
pub fn prediction_sensitivity<P: Path + ?Sized>(
    x0: &GuidanceState,
    u_seq: &[InputCmd],
    v: f64,
    t_m: f64,
    path: &P,
) -> Result<(Vec<GuidanceState>, DMatrix<f64>)> {
    let n = u_seq.len();
    let mut states = Vec::with_capacity(n + 1);
    states.push(*x0);
    let mut s = DMatrix::zeros(3 * n, 3 * n);
    for (i, u) in u_seq.iter().enumerate() {
        let x = states[i];
        let pt = sample_path(path, x.omega()?)?;
        let a = Matrix3::identity() + state_jacobian(&x, u, v, path)? * t_m;
        let b = input_jacobian_at(&x, u, v, &pt) * t_m;
        for k in 0..i {
            let prev = s.fixed_view::<3, 3>(3 * (i - 1), 3 * k).into_owned();
            s.fixed_view_mut::<3, 3>(3 * i, 3 * k).copy_from(&(a * prev));
        }
        s.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&b);
        states.push(crate::model::euler_step(&x, u, v, t_m, path)?);
    }
    Ok((states, s))
}

/// Cumulative-sum map from increments to absolute input offsets.
fn cumulative(horizon: usize) -> DMatrix<f64> {
    let n = 3 * horizon;
    DMatrix::from_fn(n, n, |r, c| if c % 3 == r % 3 && c / 3 <= r / 3 { 1.0 } else { 0.0 })
}

/// One-QP receding-horizon law on the linearised prediction.
#[derive(Debug, Clone)]
pub struct PnmpcSolver {
    cfg: NmpcConfig,
    qp_warm: Option<QpSolution>,
}

impl PnmpcSolver {
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

    /// Builds the QP in the horizon increments `Δu` at the current point.
    pub fn build_qp<P: Path + ?Sized>(
        &self,
        x_k: &GuidanceState,
        v_k: f64,
        u_prev: &InputCmd,
        path: &P,
    ) -> Result<QpProblem> {
        let cfg = &self.cfg;
        let n = cfg.horizon;
        let p = cfg.terminal_weight.ok_or(GuidanceError::TerminalWeightUnset)?;

        let free = free_response(x_k, u_prev, v_k, cfg, path)?;
        let j = jacobian_block(x_k, u_prev, v_k, path)?;
        let g = assemble_g(&j, n, cfg.t_m).matrix;

        let mut w = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            let block = if i + 1 == n { p * cfg.lambda } else { Matrix3::from_diagonal(&cfg.q) };
            w.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&block);
        }
        let r_bar = DMatrix::from_diagonal(&DVector::from_fn(3 * n, |r, _| cfg.r[r % 3]));
        let t_cum = cumulative(n);
        let y_free = DVector::from_fn(3 * n, |r, _| free[r / 3 + 1].to_vector()[r % 3]);
        let held: Vec<Vector3<f64>> = (0..n).map(|_| u_prev.to_vector()).collect();
        let dev = stack_reference_deviation(&held, &cfg.u_ref);

        let gtw = g.transpose() * &w;
        let mut h = (&gtw * &g + t_cum.transpose() * &r_bar * &t_cum) * 2.0;
        h = (&h + h.transpose()) * 0.5;
        let grad = (&gtw * &y_free + t_cum.transpose() * &r_bar * &dev) * 2.0;

        let (a_abs, lb, ub) = input_rows(&held, u_prev, &cfg.constraints);
        QpProblem::new(h, grad, a_abs * &t_cum, lb, ub).map_err(Into::into)
    }

    pub fn solve<P: Path + ?Sized>(
        &mut self,
        x_k: &GuidanceState,
        v_k: f64,
        u_prev: &InputCmd,
        path: &P,
    ) -> Result<SolveResult> {
        if !self.cfg.constraints.in_box(u_prev) {
            return Err(GuidanceError::InfeasibleStart);
        }
        let qp = self.build_qp(x_k, v_k, u_prev, path)?;
        let sol = solve_qp(&qp, self.qp_warm.as_ref())?;
        let n = self.cfg.horizon;
        let offsets = cumulative(n) * &sol.x;
        let base = unwrap_sequence(&core::iter::repeat_n(*u_prev, n).collect::<Vec<_>>(), u_prev);
        let seq: Vec<Vector3<f64>> =
            base.iter().enumerate().map(|(i, b)| b + offsets.fixed_rows::<3>(3 * i)).collect();
        let mut out = finalize(x_k, &seq, v_k, u_prev, &self.cfg, path)?;
        out.iterations = sol.iterations;
        out.kkt_residual = sol.kkt_residual;
        out.converged = sol.converged;
        self.qp_warm = Some(sol);
        Ok(out)
    }

    /// Cost of the returned sequence on the nonlinear model.
    pub fn true_cost<P: Path + ?Sized>(
        &self,
        x_k: &GuidanceState,
        u_seq: &[InputCmd],
        v_k: f64,
        path: &P,
    ) -> Result<f64> {
        horizon_cost(x_k, u_seq, v_k, &self.cfg, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dynamics;
    use crate::path::{z_of_omega, CaseStudyPath, LinePath};
    use rand::{rngs::StdRng, Rng, SeedableRng};

    #[test]
    fn aligned_jacobian_entries() {
        let pt = sample_path(&CaseStudyPath, 3.0).unwrap();
        let x = GuidanceState::new(0.2, -0.1, z_of_omega(3.0).unwrap());
        let j = jacobian_block(&x, &InputCmd::new(0.12, pt.phi_p, 0.1), 0.0, &CaseStudyPath).unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 0)], 0.0);
        assert_eq!(j[(1, 1)], 0.12);
        let line = jacobian_block(&GuidanceState::new(0.0, 0.0, 1.0), &InputCmd::new(0.1, 0.0, 0.1), 0.0, &LinePath::default())
            .unwrap();
        assert_eq!(line[(2, 2)], -1.0);
    }

    fn random_point(rng: &mut StdRng) -> (GuidanceState, InputCmd, f64) {
        let x = GuidanceState::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.01..1.0));
        let u = InputCmd::new(rng.random_range(0.0..0.225), rng.random_range(-3.1..3.1), rng.random_range(0.01..0.75));
        (x, u, rng.random_range(-0.15..0.15))
    }

    #[test]
    fn input_jacobian_matches_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let (x, u, v) = random_point(&mut rng);
            let j = jacobian_block(&x, &u, v, &CaseStudyPath).unwrap();
            assert_eq!((j[(2, 0)], j[(2, 1)]), (0.0, 0.0));
            let h = 1e-6;
            for c in 0..3 {
                let mut up = u.to_vector();
                let mut dn = up;
                up[c] += h;
                dn[c] -= h;
                let fd = (dynamics(&x, &InputCmd::from_vector(&up), v, &CaseStudyPath).unwrap()
                    - dynamics(&x, &InputCmd::from_vector(&dn), v, &CaseStudyPath).unwrap())
                    / (2.0 * h);
                for r in 0..3 {
                    let err = (j[(r, c)] - fd[r]).abs();
                    assert!(err <= 1e-6 * j[(r, c)].abs().max(1e-3), "({r},{c}) {} vs {}", j[(r, c)], fd[r]);
                }
            }
        }
    }

    #[test]
    fn state_jacobian_matches_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let (mut x, u, v) = random_point(&mut rng);
            x.z = x.z.clamp(0.02, 0.9);
            let a = state_jacobian(&x, &u, v, &CaseStudyPath).unwrap();
            for c in 0..3 {
                let h = if c == 2 { 1e-7 * x.z } else { 1e-6 };
                let mut up = x.to_vector();
                let mut dn = up;
                up[c] += h;
                dn[c] -= h;
                let fd = (dynamics(&GuidanceState::from_vector(&up), &u, v, &CaseStudyPath).unwrap()
                    - dynamics(&GuidanceState::from_vector(&dn), &u, v, &CaseStudyPath).unwrap())
                    / (2.0 * h);
                for r in 0..3 {
                    let scale = a[(r, c)].abs().max(fd[r].abs()).max(1e-2);
                    assert!((a[(r, c)] - fd[r]).abs() <= 1e-5 * scale, "({r},{c}) {} vs {}", a[(r, c)], fd[r]);
                }
            }
        }
    }

    #[test]
    fn g_layout() {
        let g = assemble_g(&Matrix3::identity(), 2, 1.0);
        let i = Matrix3::identity();
        assert_eq!(g.block(0, 0), i);
        assert_eq!(g.block(0, 1), Matrix3::zeros());
        assert_eq!(g.block(1, 0), i * 2.0);
        assert_eq!(g.block(1, 1), i);
        let j = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        assert_eq!(assemble_g(&j, 1, 0.5).matrix, DMatrix::from_column_slice(3, 3, (j * 0.5).as_slice()));
    }

    #[test]
    fn g_is_block_toeplitz_and_matches_loop() {
        let mut rng = StdRng::seed_from_u64(3);
        let j = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let g = assemble_g(&j, 3, 1.0);
        for i in 0..3 {
            for k in 0..=i {
                assert_eq!(g.block(i, k), g.block(i - k, 0));
            }
        }
        // An increment at step l adds (i − l + 1)·J·Δ to state i (1-based).
        for l in 0..3 {
            let d = Vector3::new(0.3, -0.2, 0.5);
            let mut du = DVector::zeros(9);
            du.fixed_rows_mut::<3>(3 * l).copy_from(&d);
            let y = &g.matrix * du;
            for i in 0..3 {
                let expect = if i >= l { j * d * (i - l + 1) as f64 } else { Vector3::zeros() };
                assert!((y.fixed_rows::<3>(3 * i) - expect).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn free_response_matches_manual_recursion() {
        let cfg = NmpcConfig::default();
        let pt = sample_path(&CaseStudyPath, 2.5).unwrap();
        let x0 = GuidanceState::new(1.377_470_671_488_718, 5.853_194_685_483_319, 1.0 / 3.5);
        let u = InputCmd::new(0.0, pt.phi_p, 0.01);
        let free = free_response(&x0, &u, 0.0, &cfg, &CaseStudyPath).unwrap();
        // Hand recursion: u = 0 and ψ = φ_p(ω_j) only at j = 0.
        let mut x = x0;
        for step in free.iter().skip(1) {
            let q = sample_path(&CaseStudyPath, 1.0 / x.z - 1.0).unwrap();
            let rel = u.psi - q.phi_p;
            let k = q.dphi_domega / q.speed_factor;
            let next = GuidanceState::new(
                x.x_e + 0.0 * cos(rel) + 0.01 * (k * x.y_e - 1.0),
                x.y_e + 0.0 * sin(rel) - 0.01 * k * x.x_e,
                x.z - x.z * x.z * 0.01 / q.speed_factor,
            );
            assert!((next.to_vector() - step.to_vector()).amax() < 1e-15);
            x = next;
        }
    }

    #[test]
    fn sensitivity_matches_differences() {
        let x0 = GuidanceState::new(0.5, -1.0, 0.2);
        let seq = [InputCmd::new(0.1, 0.4, 0.12), InputCmd::new(0.13, 0.6, 0.2), InputCmd::new(0.15, 0.5, 0.1)];
        let (_, s) = prediction_sensitivity(&x0, &seq, 0.05, 1.0, &CaseStudyPath).unwrap();
        let stacked = |u: &[InputCmd]| {
            let xs = predict(&x0, u, 0.05, &NmpcConfig::default(), &CaseStudyPath).unwrap();
            DVector::from_fn(9, |r, _| xs[r / 3 + 1].to_vector()[r % 3])
        };
        let h = 1e-6;
        for c in 0..9 {
            let mut up = seq;
            let mut dn = seq;
            let mut a = up[c / 3].to_vector();
            a[c % 3] += h;
            up[c / 3] = InputCmd::from_vector(&a);
            let mut b = dn[c / 3].to_vector();
            b[c % 3] -= h;
            dn[c / 3] = InputCmd::from_vector(&b);
            let fd = (stacked(&up) - stacked(&dn)) / (2.0 * h);
            assert!((s.column(c) - fd).amax() < 1e-7, "column {c}");
        }
    }
}
