#![allow(dead_code)]

pub mod mpc_oracle;
pub mod qp_oracle;

use ates_core::datagen::{Dataset, Split};
use ates_core::sysid::ArxParams;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A stable 3-output, 2-input ARX system of order 3.
pub fn known_arx() -> ArxParams {
    let a1 = DMatrix::from_row_slice(3, 3, &[-0.60, 0.05, -0.02, 0.04, -0.50, 0.03, -0.01, 0.06, -0.40]);
    let a2 = DMatrix::from_row_slice(3, 3, &[0.10, -0.02, 0.01, 0.00, 0.08, -0.01, 0.02, 0.00, 0.05]);
    let a3 = DMatrix::from_row_slice(3, 3, &[-0.02, 0.01, 0.00, 0.01, -0.01, 0.00, 0.00, 0.01, -0.01]);
    let b1 = DMatrix::from_row_slice(3, 2, &[0.50, 0.10, -0.30, 0.20, 0.25, -0.10]);
    let b2 = DMatrix::from_row_slice(3, 2, &[0.20, -0.05, 0.10, 0.15, -0.10, 0.05]);
    let b3 = DMatrix::from_row_slice(3, 2, &[-0.05, 0.02, 0.03, -0.04, 0.02, 0.01]);
    ArxParams::new(vec![a1, a2, a3], vec![b1, b2, b3], DVector::zeros(2), DVector::zeros(3)).unwrap()
}

/// Second-order single-input system used for the noise studies.
pub fn small_arx() -> ArxParams {
    let a1 = DMatrix::from_row_slice(2, 2, &[-0.7, 0.1, 0.0, -0.5]);
    let a2 = DMatrix::from_row_slice(2, 2, &[0.12, 0.0, 0.05, 0.06]);
    let b1 = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
    let b2 = DMatrix::from_row_slice(2, 1, &[0.3, -0.2]);
    ArxParams::new(vec![a1, a2], vec![b1, b2], DVector::zeros(1), DVector::zeros(2)).unwrap()
}

/// Runs the ARX recursion from rest.
pub fn simulate_arx(params: &ArxParams, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let p = params.n_outputs();
    let mut y = DMatrix::zeros(n, p);
    for k in 0..n {
        let mut yk = DVector::zeros(p);
        for i in 1..=params.sigma.min(k) {
            yk += &params.b[i - 1] * u.row(k - i).transpose() - &params.a[i - 1] * y.row(k - i).transpose();
        }
        y.row_mut(k).copy_from(&yk.transpose());
    }
    y
}

/// White input surrounded by zeros, with the active segment made zero mean,
/// so that truncated correlation sums equal the infinite ones.
pub fn padded_input(m: usize, lead: usize, active: usize, tail: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut u = DMatrix::zeros(lead + active + tail, m);
    for j in 0..m {
        let vals: Vec<f64> = (0..active).map(|_| normal.sample(&mut rng)).collect();
        let mean = vals.iter().sum::<f64>() / active as f64;
        for (k, v) in vals.iter().enumerate() {
            u[(lead + k, j)] = v - mean;
        }
    }
    u
}

pub fn white(n: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    DMatrix::from_fn(n, cols, |_, _| normal.sample(rng))
}

pub fn dataset(u: DMatrix<f64>, y: DMatrix<f64>) -> Dataset {
    Dataset::new(60.0, u, y, 0, Split::Train).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
