mod support;

use rand::rngs::StdRng;
use rand::SeedableRng;

use support::qp_oracle::{brute_force, random_problem};
use usv_guidance::qp::{solve_qp, solve_qp_with, QpOptions};

#[test]
fn matches_active_set_enumeration() {
    let mut rng = StdRng::seed_from_u64(2024);
    for case in 0..300 {
        let p = random_problem(&mut rng);
        let reference = brute_force(&p).expect("oracle finds the minimiser");
        let s = solve_qp(&p, None).unwrap();
        assert!(s.converged, "case {case}");
        assert!((&s.x - &reference).amax() < 1e-7, "case {case}: {} vs {}", s.x, reference);
        assert!((s.objective - p.objective(&reference)).abs() < 1e-8, "case {case}");
        assert!(s.kkt_residual <= 1e-8, "case {case}: kkt {}", s.kkt_residual);
        assert!(p.max_violation(&s.x) <= 1e-8, "case {case}");
        for (i, &mu) in s.multipliers.iter().enumerate() {
            if s.active_set.iter().all(|a| a.index != i) {
                assert_eq!(mu, 0.0);
            }
        }
    }
}

#[test]
fn warm_restart_and_monotone_trace() {
    let mut rng = StdRng::seed_from_u64(99);
    let opts = QpOptions { record_trace: true, ..QpOptions::default() };
    for case in 0..200 {
        let p = random_problem(&mut rng);
        let cold = solve_qp_with(&p, None, &opts).unwrap();
        assert!(
            cold.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs())),
            "case {case}: {:?}",
            cold.objective_trace
        );
        let warm = solve_qp(&p, Some(&cold)).unwrap();
        assert!(warm.iterations <= 2, "case {case}: {} iterations", warm.iterations);
        assert!((&warm.x - &cold.x).amax() < 1e-12);
    }
}

#[test]
fn deterministic() {
    let mut rng = StdRng::seed_from_u64(5);
    let p = random_problem(&mut rng);
    assert_eq!(solve_qp(&p, None).unwrap(), solve_qp(&p, None).unwrap());
}
