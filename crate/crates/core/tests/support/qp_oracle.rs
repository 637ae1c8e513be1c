//! Brute-force reference for small dense QPs: enumerate candidate active
//! sets, solve each equality-constrained KKT system with a plain LU, keep the
//! first point that is primal and dual feasible. For a strictly convex
//! problem that point is the unique minimiser.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

use usv_guidance::qp::QpProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
}

pub fn brute_force(p: &QpProblem) -> Option<DVector<f64>> {
    let n = p.g.len();
    let m = p.lb.len();
    let mut sides: Vec<Vec<Side>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = Vec::new();
        if p.lb[i].is_finite() {
            s.push(Side::Lower);
        }
        if p.ub[i].is_finite() && p.ub[i] != p.lb[i] {
            s.push(Side::Upper);
        }
        sides.push(s);
    }
    for size in 0..=n.min(m) {
        let mut found = None;
        for_each_subset(m, size, &mut |subset| {
            if found.is_some() {
                return;
            }
            let mut choice = vec![0usize; subset.len()];
            loop {
                if subset.iter().zip(&choice).all(|(&i, &c)| c < sides[i].len()) {
                    let active: Vec<(usize, Side)> = subset.iter().zip(&choice).map(|(&i, &c)| (i, sides[i][c])).collect();
                    if let Some(x) = try_active(p, n, &active) {
                        found = Some(x);
                        return;
                    }
                }
                // Odometer over side choices.
                let mut k = 0;
                loop {
                    if k == choice.len() {
                        return;
                    }
                    choice[k] += 1;
                    if choice[k] < sides[subset[k]].len().max(1) {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
            }
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

fn for_each_subset(m: usize, size: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, left: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < left {
                break;
            }
            cur.push(i);
            rec(i + 1, m, left - 1, cur, f);
            cur.pop();
        }
    }
    rec(0, m, size, &mut Vec::new(), f);
}

fn try_active(p: &QpProblem, n: usize, active: &[(usize, Side)]) -> Option<DVector<f64>> {
    let w = active.len();
    let mut kkt = DMatrix::zeros(n + w, n + w);
    let mut rhs = DVector::zeros(n + w);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    for j in 0..n {
        rhs[j] = -p.g[j];
    }
    for (k, &(i, side)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + k, j)] = p.a[(i, j)];
            kkt[(j, n + k)] = -p.a[(i, j)];
        }
        rhs[n + k] = if side == Side::Lower { p.lb[i] } else { p.ub[i] };
    }
    let sol = kkt.lu().solve(&rhs)?;
    let x = sol.rows(0, n).into_owned();
    if p.max_violation(&x) > 1e-9 {
        return None;
    }
    // Hx + g = Aᵀμ with μ ≥ 0 on lower and ≤ 0 on upper bounds.
    for (k, &(i, side)) in active.iter().enumerate() {
        let mu = sol[n + k];
        let ok = match side {
            Side::Lower if p.lb[i] == p.ub[i] => true,
            Side::Lower => mu >= -1e-9,
            Side::Upper => mu <= 1e-9,
        };
        if !ok {
            return None;
        }
    }
    let resid = &p.h * &x + &p.g;
    let mut mu_full = DVector::zeros(p.lb.len());
    for (k, &(i, _)) in active.iter().enumerate() {
        mu_full[i] = sol[n + k];
    }
    ((resid - p.a.transpose() * mu_full).amax() < 1e-8).then_some(x)
}

/// Random strictly convex QP with `n ≤ 6` variables and `m ≤ 10` rows whose
/// bounds straddle a known interior point, so it is always feasible.
pub fn random_problem(rng: &mut StdRng) -> QpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=10);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..1.0);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ax = &a * &x_feas;
    let mut lb = DVector::zeros(m);
    let mut ub = DVector::zeros(m);
    for i in 0..m {
        let kind = rng.random_range(0..10);
        let lo = ax[i] - rng.random_range(0.0..1.0);
        let hi = ax[i] + rng.random_range(0.0..1.0);
        match kind {
            0..=2 => {
                lb[i] = lo;
                ub[i] = f64::INFINITY;
            }
            3..=5 => {
                lb[i] = f64::NEG_INFINITY;
                ub[i] = hi;
            }
            6 if n > 1 => {
                lb[i] = ax[i];
                ub[i] = ax[i];
            }
            _ => {
                lb[i] = lo;
                ub[i] = hi;
            }
        }
    }
    QpProblem::new(h, g, a, lb, ub).expect("well-formed random problem")
}
