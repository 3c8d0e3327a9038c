use ates_core::predictor::{rollout, History};
use ates_core::sysid::ArxParams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The known system moved to a plant-like operating point.
pub fn plant_like(mut p: ArxParams) -> ArxParams {
    p.u_mean = DVector::from_row_slice(&[5.0, 283.0]);
    p.y_mean = DVector::from_row_slice(&[284.0, 290.0, 279.0]);
    p
}

pub fn random_history(p: &ArxParams, rng: &mut ChaCha8Rng) -> History {
    let y = (0..p.sigma).map(|_| DVector::from_fn(3, |o, _| p.y_mean[o] + rng.random_range(-3.0..3.0))).collect();
    let u = (0..p.sigma).map(|_| DVector::from_row_slice(&[rng.random_range(-100.0..100.0), rng.random_range(276.0..291.0)])).collect();
    History::new(y, u).unwrap()
}

/// Stacked predictions for flows `q` from the measured history `h` at `t_k`:
/// the rollout with `u(t_k) = (q_0, T_r(t_k))` pushed onto the history.
pub fn rollout_oracle(p: &ArxParams, h: &History, tr: &[f64], q: &[f64]) -> DVector<f64> {
    let n = q.len();
    let mut h0 = h.clone();
    h0.u.pop();
    h0.u.insert(0, DVector::from_row_slice(&[q[0], tr[0]]));
    let u = DMatrix::from_fn(n, 2, |s, j| {
        let k = (s + 1).min(n - 1);
        if j == 0 {
            q[k]
        } else {
            tr[k]
        }
    });
    let y = rollout(p, &h0, &u);
    DVector::from_iterator(3 * n, (0..n).flat_map(|s| (0..3).map(move |o| (s, o))).map(|(s, o)| y[(s, o)]))
}
