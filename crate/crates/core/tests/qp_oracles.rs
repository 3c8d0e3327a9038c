mod common;

use ates_core::qp::{solve_qp, Qp, QpSettings, QpStatus};
use common::qp_oracle::{active_set, random_qp};
use nalgebra::{DMatrix, DVector};

fn build(p: &common::qp_oracle::RandomQp) -> Qp {
    Qp::new(&p.h, &p.g, &p.c, &p.lb, &p.ub).unwrap()
}

#[test]
fn matches_active_set_oracle_on_random_instances() {
    let settings = QpSettings::default();
    for seed in 0..40 {
        let n = 5 + (seed as usize * 7) % 46;
        let p = random_qp(seed, n);
        let qp = build(&p);
        let sol = solve_qp(&qp, &settings).unwrap();
        let oracle = active_set(&p);
        assert_eq!(sol.status, QpStatus::Solved, "seed {seed}");
        let rel = (sol.objective - oracle.objective).abs() / oracle.objective.abs().max(1.0);
        assert!(rel <= 1e-5, "seed {seed}: objective {} vs {}", sol.objective, oracle.objective);
        let g_inf = p.g.amax();
        assert!(qp.stationarity(&sol.x, &sol.z) <= 1e-5 * (1.0 + g_inf), "seed {seed}");
        assert!(qp.infeasibility(&sol.x) <= 1e-6, "seed {seed}");
        let dx = (DVector::from_vec(sol.x.clone()) - &oracle.x).amax();
        assert!(dx < 1e-4, "seed {seed}: |dx| = {dx}");
    }
}

#[test]
fn objective_scaling_leaves_minimiser_unchanged() {
    let p = random_qp(7, 20);
    let base = solve_qp(&build(&p), &QpSettings::default()).unwrap();
    for alpha in [1e-3, 0.5, 40.0] {
        let qp = Qp::new(&(&p.h * alpha), &(&p.g * alpha), &p.c, &p.lb, &p.ub).unwrap();
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        let dx = sol.x.iter().zip(&base.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dx < 1e-6, "alpha {alpha}: {dx}");
    }
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let qp = build(&random_qp(3, 30));
    let a = solve_qp(&qp, &QpSettings::default()).unwrap();
    let b = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.z, b.z);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn positive_semidefinite_cost_with_free_directions() {
    // min x0² + x1 subject to 1 ≤ x1 ≤ 2, -3 ≤ x0 + x2 ≤ 3, 0 ≤ x2 ≤ 1
    let mut h = DMatrix::zeros(3, 3);
    h[(0, 0)] = 2.0;
    let g = DVector::from_row_slice(&[0.0, 1.0, 0.0]);
    let c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let qp = Qp::new(&h, &g, &c, &DVector::from_row_slice(&[1.0, -3.0, 0.0]), &DVector::from_row_slice(&[2.0, 3.0, 1.0])).unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Solved);
    assert!((sol.objective - 1.0).abs() < 1e-6);
    assert!(sol.x[0].abs() < 1e-5 && (sol.x[1] - 1.0).abs() < 1e-6);
}
