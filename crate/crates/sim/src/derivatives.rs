//! Finite-difference audit of the analytic path derivatives and the input
//! Jacobian used by the linearised law.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use usv_guidance::model::dynamics;
use usv_guidance::path::{sample_path, Path};
use usv_guidance::pnmpc::jacobian_block;
use usv_guidance::{CaseStudyPath, GuidanceState, InputCmd};

const PATH_STEP: f64 = 1e-5;
const JACOBIAN_STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-6;
const ABS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub samples: usize,
    /// Worst `|analytic − fd| / max(|fd|·rel, floor)` over path checks.
    pub path_worst: f64,
    pub jacobian_worst: f64,
    pub failures: usize,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn score(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (REL_TOL * fd.abs()).max(ABS_FLOOR)
}

fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Runs `samples` path checks on `ω ∈ [0, 120]` and `samples` Jacobian
/// checks at random operating points of the case-study path.
pub fn check_derivatives(samples: usize, seed: u64) -> DerivativeReport {
    let path = CaseStudyPath;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = DerivativeReport { samples, path_worst: 0.0, jacobian_worst: 0.0, failures: 0 };

    for _ in 0..samples {
        // Keep the stencil inside ω ≥ 0.
        let w = rng.random_range(PATH_STEP..120.0);
        let d1 = path.first_derivative(w);
        let d2 = path.second_derivative(w);
        let checks = [
            (d1.0, central(|s| path.position(s).0, w, PATH_STEP)),
            (d1.1, central(|s| path.position(s).1, w, PATH_STEP)),
            (d2.0, central(|s| path.first_derivative(s).0, w, PATH_STEP)),
            (d2.1, central(|s| path.first_derivative(s).1, w, PATH_STEP)),
        ];
        for (a, fd) in checks {
            let s = score(a, fd);
            report.path_worst = report.path_worst.max(s);
            report.failures += usize::from(!(s <= 1.0));
        }
    }

    for _ in 0..samples {
        let x = GuidanceState::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.01..=1.0));
        let phi = sample_path(&path, x.omega().unwrap_or(0.0)).map(|p| p.phi_p).unwrap_or(0.0);
        let u = InputCmd::new(rng.random_range(0.0..=0.225), phi + rng.random_range(-PI..PI), rng.random_range(0.01..=0.75));
        let v = rng.random_range(-0.15..=0.15);
        let Ok(j) = jacobian_block(&x, &u, v, &path) else {
            report.failures += 1;
            continue;
        };
        for col in 0..3 {
            let perturbed = |h: f64| {
                let mut p = u.to_vector();
                p[col] += h;
                dynamics(&x, &InputCmd::from_vector(&p), v, &path)
            };
            let (Ok(hi), Ok(lo)) = (perturbed(JACOBIAN_STEP), perturbed(-JACOBIAN_STEP)) else {
                report.failures += 1;
                continue;
            };
            for row in 0..3 {
                let fd = (hi[row] - lo[row]) / (2.0 * JACOBIAN_STEP);
                let s = score(j[(row, col)], fd);
                report.jacobian_worst = report.jacobian_worst.max(s);
                report.failures += usize::from(!(s <= 1.0));
            }
        }
    }
    report
}
