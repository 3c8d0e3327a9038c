mod common;

use ates_core::predictor::{self, History};
use common::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_predictor_has_zero_single_step_error() {
    let truth = known_arx();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = white(400, 2, 1.0, &mut rng);
    let y = simulate_arx(&truth, &u);
    let r = predictor::validate_single_step(&truth, &dataset(u, y)).unwrap();
    assert_eq!(r.stats.count, 397);
    for j in 0..3 {
        assert!(r.stats.mae[j] < 1e-12);
    }
}

#[test]
fn validation_set_of_820_gives_817_errors() {
    let truth = known_arx();
    let u = DMatrix::from_fn(820, 2, |i, j| ((i * (j + 2)) % 9) as f64);
    let y = simulate_arx(&truth, &u);
    let r = predictor::validate_single_step(&truth, &dataset(u, y)).unwrap();
    assert_eq!(r.stats.count, 817);
}

#[test]
fn rollout_reproduces_generating_simulation() {
    let truth = known_arx();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = white(800, 2, 1.0, &mut rng);
    let y = simulate_arx(&truth, &u);
    let ds = dataset(u.clone(), y.clone());
    let j = 40;
    let h0 = History::from_dataset(&ds, j, 3).unwrap();
    let yhat = predictor::rollout(&truth, &h0, &u.rows(j, 720).into_owned());
    let err = (yhat - y.rows(j, 720)).abs().max();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn prediction_is_affine_in_history() {
    let mut p = known_arx();
    p.y_mean = nalgebra::DVector::from_vec(vec![290.0, 300.0, 280.0]);
    p.u_mean = nalgebra::DVector::from_vec(vec![10.0, 285.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mk = |rng: &mut ChaCha8Rng| {
        let y = white(3, 3, 5.0, rng);
        let u = white(3, 2, 5.0, rng);
        History::new(
            (0..3).map(|i| y.row(i).transpose() + &p.y_mean).collect(),
            (0..3).map(|i| u.row(i).transpose() + &p.u_mean).collect(),
        )
        .unwrap()
    };
    let (h1, h2) = (mk(&mut rng), mk(&mut rng));
    let hm = History::at_means(&p);
    let sum = History::new(
        (0..3).map(|i| &h1.y[i] + &h2.y[i] - &hm.y[i]).collect(),
        (0..3).map(|i| &h1.u[i] + &h2.u[i] - &hm.u[i]).collect(),
    )
    .unwrap();
    let lhs = predictor::predict_one(&p, &sum);
    let rhs = predictor::predict_one(&p, &h1) + predictor::predict_one(&p, &h2) - predictor::predict_one(&p, &hm);
    assert!((lhs - rhs).abs().max() < 1e-9);
}

#[test]
fn horizon_profile_of_perfect_predictor_is_zero() {
    let truth = known_arx();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = white(823, 2, 1.0, &mut rng);
    let y = simulate_arx(&truth, &u);
    let prof = predictor::horizon_error_profile(&truth, &dataset(u, y), 720, 100).unwrap();
    assert_eq!(prof.horizon(), 720);
    assert_eq!(prof.starts.len(), 100);
    assert!(prof.mean.abs().max() < 1e-8 && prof.std.abs().max() < 1e-8);
}

#[test]
fn first_horizon_step_matches_single_step_stats() {
    let truth = known_arx();
    let mut wrong = truth.clone();
    wrong.b[0] *= 1.3;
    wrong.a[1] *= 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = white(300, 2, 1.0, &mut rng);
    let y = simulate_arx(&truth, &u) + white(300, 3, 0.1, &mut rng);
    let ds = dataset(u, y);
    let prof = predictor::horizon_error_profile(&wrong, &ds, 50, 20).unwrap();
    let single = predictor::validate_single_step(&wrong, &ds).unwrap();
    let rows = DMatrix::from_fn(prof.starts.len(), 3, |w, c| single.errors[(prof.starts[w] - 3, c)]);
    let stats = predictor::ErrorStats::from_errors(&rows);
    for c in 0..3 {
        assert!((prof.mean[(0, c)] - stats.mean[c]).abs() < 1e-12);
        assert!((prof.std[(0, c)] - stats.std[c]).abs() < 1e-12);
    }
}

#[test]
fn parallel_aggregation_is_deterministic() {
    let truth = known_arx();
    let mut wrong = truth.clone();
    wrong.b[0] *= 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = white(500, 2, 1.0, &mut rng);
    let y = simulate_arx(&truth, &u);
    let ds = dataset(u, y);
    let a = predictor::horizon_error_profile_with_jobs(&wrong, &ds, 100, 30, 1).unwrap();
    let b = predictor::horizon_error_profile_with_jobs(&wrong, &ds, 100, 30, 7).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std, b.std);
}

#[test]
fn stable_rollout_stays_bounded() {
    let truth = known_arx();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = white(5000, 2, 1.0, &mut rng).map(|x| x.clamp(-1.0, 1.0));
    let y = predictor::rollout(&truth, &History::at_means(&truth), &u);
    let gain: f64 = 10.0;
    assert!(y.abs().max() < gain);
}
