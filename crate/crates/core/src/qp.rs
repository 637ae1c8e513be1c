//! Dense primal active-set solver for strictly convex QPs
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  lb ≤ A x ≤ ub
//! ```
//!
//! Bounds may be infinite; `lb = ub` encodes an equality. Each
//! equality-constrained subproblem is solved in the null space of the
//! working rows (full QR, then a Cholesky factor of the reduced Hessian),
//! which keeps active rows satisfied to rounding even when the working set
//! is nearly degenerate. A feasible start is taken from the warm start, the
//! origin, or an elastic phase-one problem, in that order.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Pivot floor below which `H` is shifted by the same amount times identity.
pub const H_REGULARIZATION: f64 = 1e-10;
/// Primal feasibility accepted for a start point or a phase-one result.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const PHASE_ONE_PENALTY: f64 = 1e3;
const PHASE_ONE_PENALTY_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("problem dimensions are inconsistent")]
    Dimension,
    #[error("Hessian is not positive definite")]
    NotConvex,
    #[error("constraints are infeasible (residual violation {violation:e})")]
    Infeasible { violation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = g.len();
        let m = lb.len();
        if h.nrows() != n || h.ncols() != n || a.ncols() != n || a.nrows() != m || ub.len() != m {
            return Err(QpError::Dimension);
        }
        if lb.iter().zip(ub.iter()).any(|(l, u)| l > u) {
            return Err(QpError::Infeasible { violation: f64::INFINITY });
        }
        Ok(Self { h, g, a, lb, ub })
    }

    /// Unconstrained problem.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.lb.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest bound violation of `x` (zero when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        (0..self.num_constraints())
            .map(|i| (self.lb[i] - ax[i]).max(ax[i] - self.ub[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Which side of a two-sided constraint is held active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveConstraint {
    pub index: usize,
    pub bound: Bound,
}

impl ActiveConstraint {
    fn sign(&self) -> f64 {
        match self.bound {
            Bound::Upper => -1.0,
            Bound::Lower | Bound::Fixed => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub active_set: Vec<ActiveConstraint>,
    /// Multiplier per constraint, positive at a lower bound, negative at an
    /// upper bound, zero when inactive: `Hx + g = Aᵀμ`.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// `false` when the iteration cap stopped the solver; `x` is then the
    /// best feasible iterate found.
    pub converged: bool,
    /// Objective after every phase-two iteration, when requested.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QpOptions {
    /// Zero selects `20 (n + m) + 50`.
    pub max_iterations: usize,
    pub record_trace: bool,
}

pub fn solve_qp(p: &QpProblem, warm: Option<&QpSolution>) -> Result<QpSolution, QpError> {
    solve_qp_with(p, warm, &QpOptions::default())
}

pub fn solve_qp_with(p: &QpProblem, warm: Option<&QpSolution>, opts: &QpOptions) -> Result<QpSolution, QpError> {
    let n = p.dim();
    let m = p.num_constraints();
    let max_iter = if opts.max_iterations == 0 { 20 * (n + m) + 50 } else { opts.max_iterations };
    let h_reg = regularized_hessian(&p.h)?;

    let (x0, seed) = match warm {
        Some(w) if w.x.len() == n && p.max_violation(&w.x) <= FEASIBILITY_TOL => (w.x.clone(), w.active_set.clone()),
        _ => {
            let zero = DVector::zeros(n);
            if p.max_violation(&zero) <= FEASIBILITY_TOL {
                (zero, Vec::new())
            } else {
                let start = warm.filter(|w| w.x.len() == n).map(|w| w.x.clone()).unwrap_or(zero);
                (phase_one(p, &start)?, Vec::new())
            }
        }
    };

    let mut working = initial_working_set(p, &x0, &seed);
    let mut state = Iterate { x: x0, working: Vec::new() };
    core::mem::swap(&mut state.working, &mut working);
    run_active_set(p, &h_reg, state, max_iter, opts.record_trace)
}

struct Iterate {
    x: DVector<f64>,
    working: Vec<ActiveConstraint>,
}

fn run_active_set(
    p: &QpProblem,
    h: &DMatrix<f64>,
    mut it: Iterate,
    max_iter: usize,
    record_trace: bool,
) -> Result<QpSolution, QpError> {
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = DVector::zeros(it.working.len());

    while iterations < max_iter {
        iterations += 1;
        let c = &p.h * &it.x + &p.g;
        let (mut step, lam) = equality_step(p, h, &it.working, &c);
        lambda = lam;
        // A full working set pins x; otherwise a step that does not descend
        // can only be rounding noise.
        if it.working.len() >= p.dim() || c.dot(&step) >= 0.0 {
            step.fill(0.0);
        }
        let scale = 1.0 + it.x.amax();
        if step.amax() <= 1e-12 * scale {
            let dual_tol = 1e-12 * (1.0 + c.amax());
            let worst = it
                .working
                .iter()
                .enumerate()
                .filter(|(_, w)| w.bound != Bound::Fixed)
                .map(|(k, _)| (k, lambda[k]))
                .fold(None, |best: Option<(usize, f64)>, (k, l)| match best {
                    Some((_, b)) if b <= l => best,
                    _ => Some((k, l)),
                });
            match worst {
                Some((k, l)) if l < -dual_tol => {
                    it.working.remove(k);
                    if record_trace {
                        trace.push(p.objective(&it.x));
                    }
                    continue;
                }
                _ => {
                    converged = true;
                    if record_trace {
                        trace.push(p.objective(&it.x));
                    }
                    break;
                }
            }
        }

        let (alpha, blocking) = ratio_test(p, &it, &step);
        it.x += alpha * &step;
        if let Some(b) = blocking {
            it.working.push(b);
        }
        restore_working(p, &mut it);
        if record_trace {
            trace.push(p.objective(&it.x));
        }
    }

    if !converged {
        let c = &p.h * &it.x + &p.g;
        lambda = equality_step(p, h, &it.working, &c).1;
    }
    Ok(finish(p, it, lambda, iterations, converged, trace))
}

fn finish(
    p: &QpProblem,
    it: Iterate,
    lambda: DVector<f64>,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
) -> QpSolution {
    let m = p.num_constraints();
    let mut mu = DVector::zeros(m);
    for (k, w) in it.working.iter().enumerate() {
        mu[w.index] = w.sign() * lambda[k];
    }
    let ax = &p.a * &it.x;
    let stationarity = (&p.h * &it.x + &p.g - p.a.transpose() * &mu).amax();
    let mut complementarity: f64 = 0.0;
    let mut dual_sign: f64 = 0.0;
    for (k, w) in it.working.iter().enumerate() {
        let i = w.index;
        let slack = match w.bound {
            Bound::Lower => ax[i] - p.lb[i],
            Bound::Upper => p.ub[i] - ax[i],
            Bound::Fixed => 0.0,
        };
        complementarity = complementarity.max((lambda[k] * slack).abs());
        if w.bound != Bound::Fixed {
            dual_sign = dual_sign.max(-lambda[k]);
        }
    }
    let kkt_residual = stationarity.max(p.max_violation(&it.x)).max(complementarity).max(dual_sign);
    QpSolution {
        objective: p.objective(&it.x),
        x: it.x,
        active_set: it.working,
        multipliers: mu,
        kkt_residual,
        iterations,
        converged,
        objective_trace,
    }
}

/// Longest step along `step` (at most 1) that stays feasible, and the first
/// constraint that blocks it. Ties go to the lowest constraint index.
fn ratio_test(p: &QpProblem, it: &Iterate, step: &DVector<f64>) -> (f64, Option<ActiveConstraint>) {
    let mut alpha = 1.0;
    let mut blocking = None;
    let step_norm = step.amax();
    for i in 0..p.num_constraints() {
        if it.working.iter().any(|w| w.index == i) {
            continue;
        }
        let row = p.a.row(i);
        let ap = row.dot(&step.transpose());
        let tiny = 1e-14 * row.amax() * step_norm;
        let ax = row.dot(&it.x.transpose());
        if ap < -tiny && p.lb[i].is_finite() {
            let ratio = (ax - p.lb[i]).max(0.0) / -ap;
            if ratio < alpha {
                alpha = ratio;
                let bound = if p.lb[i] == p.ub[i] { Bound::Fixed } else { Bound::Lower };
                blocking = Some(ActiveConstraint { index: i, bound });
            }
        }
        if ap > tiny && p.ub[i].is_finite() {
            let ratio = (p.ub[i] - ax).max(0.0) / ap;
            if ratio < alpha {
                alpha = ratio;
                let bound = if p.lb[i] == p.ub[i] { Bound::Fixed } else { Bound::Upper };
                blocking = Some(ActiveConstraint { index: i, bound });
            }
        }
    }
    (alpha, blocking)
}

/// Removes the rounding drift off the working constraints with a least-norm
/// correction, so that active rows hold with equality.
fn restore_working(p: &QpProblem, it: &mut Iterate) {
    let w = it.working.len();
    if w == 0 {
        return;
    }
    let n = p.dim();
    let mut rows = DMatrix::zeros(w, n);
    let mut gap = DVector::zeros(w);
    for (k, c) in it.working.iter().enumerate() {
        let row = p.a.row(c.index);
        let target = match c.bound {
            Bound::Lower | Bound::Fixed => p.lb[c.index],
            Bound::Upper => p.ub[c.index],
        };
        gap[k] = target - row.dot(&it.x.transpose());
        rows.set_row(k, &row);
    }
    if gap.amax() == 0.0 {
        return;
    }
    let gram = &rows * rows.transpose();
    if let Some((l, _)) = cholesky(&gram) {
        it.x += rows.transpose() * back_solve(&l, forward_solve(&l, gap));
    }
}

/// Solves `min ½pᵀHp + cᵀp s.t. A_W p = 0` in the null space of the
/// working rows, returning the step and the working-set multipliers
/// (nonnegative at a constrained optimum).
fn equality_step(
    p: &QpProblem,
    h: &DMatrix<f64>,
    working: &[ActiveConstraint],
    c: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = p.dim();
    let w = working.len();
    if w == 0 {
        let step = match cholesky(h) {
            Some((l, _)) => -back_solve(&l, forward_solve(&l, c.clone())),
            None => DVector::zeros(n),
        };
        return (step, DVector::zeros(0));
    }
    let (q, r) = working_qr(p, working);
    let free = n.saturating_sub(w);
    let step = if free == 0 {
        DVector::zeros(n)
    } else {
        let z = q.columns(w, free);
        let reduced = z.transpose() * h * z;
        match cholesky(&reduced) {
            Some((l, _)) => -(z * back_solve(&l, forward_solve(&l, z.transpose() * c))),
            None => DVector::zeros(n),
        }
    };
    // A_Wᵀλ = Hp + c, with A_Wᵀ = Y R.
    let rhs = q.columns(0, w.min(n)).transpose() * (h * &step + c);
    let mut lambda = DVector::zeros(w);
    for i in (0..w.min(n)).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..w.min(n) {
            s -= r[(i, k)] * lambda[k];
        }
        lambda[i] = if r[(i, i)] != 0.0 { s / r[(i, i)] } else { 0.0 };
    }
    (step, lambda)
}

/// Full QR of the (signed) working rows laid out as columns of an `n × n`
/// matrix; the trailing columns of `Q` span the null space.
fn working_qr(p: &QpProblem, working: &[ActiveConstraint]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = p.dim();
    let mut m = DMatrix::zeros(n, n.max(working.len()));
    for (k, a) in working.iter().enumerate() {
        m.set_column(k, &(p.a.row(a.index).transpose() * a.sign()));
    }
    let qr = m.qr();
    (qr.q(), qr.r())
}

/// Builds the starting working set: equalities plus any seeded constraints
/// that are active at `x`, skipping rows dependent on those already taken.
fn initial_working_set(
    p: &QpProblem,
    x: &DVector<f64>,
    seed: &[ActiveConstraint],
) -> Vec<ActiveConstraint> {
    let ax = &p.a * x;
    let tol = 1e-9;
    let m = p.num_constraints();
    let mut candidates: Vec<ActiveConstraint> = (0..m)
        .filter(|&i| p.lb[i] == p.ub[i])
        .map(|i| ActiveConstraint { index: i, bound: Bound::Fixed })
        .collect();
    for s in seed {
        if s.index >= m || candidates.iter().any(|c| c.index == s.index) {
            continue;
        }
        let active = match s.bound {
            Bound::Lower => (ax[s.index] - p.lb[s.index]).abs() <= tol * (1.0 + p.lb[s.index].abs()),
            Bound::Upper => (p.ub[s.index] - ax[s.index]).abs() <= tol * (1.0 + p.ub[s.index].abs()),
            Bound::Fixed => false,
        };
        if active {
            candidates.push(*s);
        }
    }
    let mut chosen: Vec<ActiveConstraint> = Vec::new();
    for cand in candidates {
        if chosen.len() >= p.dim() {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(cand);
        if independent(p, &trial) {
            chosen = trial;
        }
    }
    chosen
}

fn independent(p: &QpProblem, rows: &[ActiveConstraint]) -> bool {
    if rows.len() > p.dim() {
        return false;
    }
    let (_, r) = working_qr(p, rows);
    let scale = rows.iter().map(|a| p.a.row(a.index).norm()).fold(0.0, f64::max);
    (0..rows.len()).all(|k| r[(k, k)].abs() > 1e-10 * scale)
}

/// Finds a feasible point by minimising one elastic variable `t ≥ 0` that
/// relaxes every bound, starting from `start`.
fn phase_one(p: &QpProblem, start: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let n = p.dim();
    let m = p.num_constraints();
    let mut rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    for i in 0..m {
        let a = p.a.row(i).transpose();
        if p.lb[i].is_finite() {
            let mut r = a.clone().resize_vertically(n + 1, 0.0);
            r[n] = 1.0;
            rows.push((r, p.lb[i], f64::INFINITY));
        }
        if p.ub[i].is_finite() {
            let mut r = a.resize_vertically(n + 1, 0.0);
            r[n] = -1.0;
            rows.push((r, f64::NEG_INFINITY, p.ub[i]));
        }
    }
    let mut t_row = DVector::zeros(n + 1);
    t_row[n] = 1.0;
    rows.push((t_row, 0.0, f64::INFINITY));

    let k = rows.len();
    let mut a = DMatrix::zeros(k, n + 1);
    let mut lb = DVector::zeros(k);
    let mut ub = DVector::zeros(k);
    for (r, (row, l, u)) in rows.into_iter().enumerate() {
        a.set_row(r, &row.transpose());
        lb[r] = l;
        ub[r] = u;
    }
    // ½‖x − start‖² + ½t² + M·t is an exact penalty once M exceeds the
    // multipliers of the projection onto the feasible set; escalate M until
    // the elastic variable vanishes.
    let h = DMatrix::identity(n + 1, n + 1);
    let h_reg = regularized_hessian(&h)?;
    let mut aux = QpProblem { h, g: DVector::zeros(n + 1), a, lb, ub };
    for j in 0..n {
        aux.g[j] = -start[j];
    }
    let mut y = start.clone().resize_vertically(n + 1, 0.0);
    y[n] = p.max_violation(start) * (1.0 + 1e-12) + f64::MIN_POSITIVE;

    let mut penalty = PHASE_ONE_PENALTY;
    let mut violation = f64::INFINITY;
    while penalty <= PHASE_ONE_PENALTY_MAX {
        aux.g[n] = penalty;
        let sol = run_active_set(&aux, &h_reg, Iterate { x: y.clone(), working: Vec::new() }, 20 * (n + k) + 50, false)?;
        let x = sol.x.rows(0, n).into_owned();
        violation = p.max_violation(&x);
        if violation <= FEASIBILITY_TOL {
            return Ok(x);
        }
        y = sol.x;
        y[n] = y[n].max(p.max_violation(&x) * (1.0 + 1e-12) + f64::MIN_POSITIVE);
        penalty *= 1e3;
    }
    Err(QpError::Infeasible { violation })
}

/// `H`, shifted by [`H_REGULARIZATION`] when the smallest
/// pivot falls below it.
fn regularized_hessian(h: &DMatrix<f64>) -> Result<DMatrix<f64>, QpError> {
    if let Some((_, pivot)) = cholesky(h) {
        if pivot >= H_REGULARIZATION {
            return Ok(h.clone());
        }
    }
    let n = h.nrows();
    let shifted = h + DMatrix::identity(n, n) * H_REGULARIZATION;
    cholesky(&shifted).map(|_| shifted).ok_or(QpError::NotConvex)
}

/// Lower Cholesky factor and smallest pivot (before the square root). Reads
/// only the lower triangle.
fn cholesky(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        min_pivot = min_pivot.min(d);
        let root = libm::sqrt(d);
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    if n == 0 {
        min_pivot = f64::INFINITY;
    }
    Some((l, min_pivot))
}

/// Solves `L y = b`.
fn forward_solve(l: &DMatrix<f64>, mut b: DVector<f64>) -> DVector<f64> {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    b
}

/// Solves `Lᵀ x = b`.
fn back_solve(l: &DMatrix<f64>, mut b: DVector<f64>) -> DVector<f64> {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    b
}

/// Convenience for callers assembling box-plus-general constraint rows.
#[derive(Debug, Default, Clone)]
pub struct ConstraintRows {
    rows: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl ConstraintRows {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<f64>, lb: f64, ub: f64) {
        self.rows.push(row);
        self.lb.push(lb);
        self.ub.push(ub);
    }

    /// `lb ≤ x_j ≤ ub` on a single coordinate of an `n`-vector.
    pub fn push_bound(&mut self, n: usize, j: usize, lb: f64, ub: f64) {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        self.push(row, lb, ub);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn build(self, n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let m = self.rows.len();
        let a = DMatrix::from_fn(m, n, |i, j| self.rows[i][j]);
        (a, DVector::from_vec(self.lb), DVector::from_vec(self.ub))
    }
}
