//! Dense primal active-set method for strictly convex QPs, started from a
//! known feasible point.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RandomQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub feasible: DVector<f64>,
}

/// Random strictly convex QP with box, general, one-sided and equality rows.
pub fn random_qp(seed: u64, n: usize) -> RandomQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let n_box = n / 2;
    let n_gen = n / 2 + 2;
    let n_eq = (n / 5).max(1);
    let k = n_box + n_gen + n_eq;
    let mut c = DMatrix::zeros(k, n);
    for r in 0..n_box {
        c[(r, rng.random_range(0..n))] = 1.0;
    }
    for r in n_box..k {
        for j in 0..n {
            c[(r, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let cx = &c * &x0;
    let mut lb = DVector::zeros(k);
    let mut ub = DVector::zeros(k);
    for r in 0..k {
        if r >= n_box + n_gen {
            lb[r] = cx[r];
            ub[r] = cx[r];
            continue;
        }
        lb[r] = cx[r] - rng.random_range(0.1..1.0);
        ub[r] = cx[r] + rng.random_range(0.1..1.0);
        match rng.random_range(0..4) {
            0 => lb[r] = f64::NEG_INFINITY,
            1 => ub[r] = f64::INFINITY,
            _ => {}
        }
    }
    RandomQp { h, g, c, lb, ub, feasible: x0 }
}

pub struct OracleSolution {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub objective: f64,
}

/// Rows with `lb = ub` are kept as equalities; every finite side of the other
/// rows becomes `aᵀx ≤ b`.
pub fn active_set(p: &RandomQp) -> OracleSolution {
    let n = p.h.nrows();
    let k = p.c.nrows();
    let mut eq = Vec::new();
    // (row, sign): sign·c_rᵀ x ≤ sign·bound
    let mut ineq: Vec<(usize, f64, f64)> = Vec::new();
    for r in 0..k {
        if p.lb[r] == p.ub[r] {
            eq.push(r);
            continue;
        }
        if p.ub[r].is_finite() {
            ineq.push((r, 1.0, p.ub[r]));
        }
        if p.lb[r].is_finite() {
            ineq.push((r, -1.0, -p.lb[r]));
        }
    }
    let a_row = |c: &(usize, f64, f64)| p.c.row(c.0).transpose() * c.1;
    let mut x = p.feasible.clone();
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..10_000 {
        let nw = eq.len() + working.len();
        let mut kkt = DMatrix::zeros(n + nw, n + nw);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for (w, &r) in eq.iter().enumerate() {
            for j in 0..n {
                kkt[(n + w, j)] = p.c[(r, j)];
                kkt[(j, n + w)] = p.c[(r, j)];
            }
        }
        for (w, &i) in working.iter().enumerate() {
            let a = a_row(&ineq[i]);
            for j in 0..n {
                kkt[(n + eq.len() + w, j)] = a[j];
                kkt[(j, n + eq.len() + w)] = a[j];
            }
        }
        let mut rhs = DVector::zeros(n + nw);
        let grad = &p.h * &x + &p.g;
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let sol = kkt.lu().solve(&rhs).expect("nonsingular working set");
        let step = sol.rows(0, n).into_owned();
        if step.amax() < 1e-11 * (1.0 + x.amax()) {
            let lam = sol.rows(n, nw).into_owned();
            let worst = (0..working.len())
                .map(|w| (w, lam[eq.len() + w]))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((w, l)) if l < -1e-10 => {
                    working.remove(w);
                }
                _ => {
                    let mut z = DVector::zeros(k);
                    for (w, &r) in eq.iter().enumerate() {
                        z[r] = lam[w];
                    }
                    for (w, &i) in working.iter().enumerate() {
                        z[ineq[i].0] += ineq[i].1 * lam[eq.len() + w];
                    }
                    let objective = 0.5 * x.dot(&(&p.h * &x)) + p.g.dot(&x);
                    return OracleSolution { x, z, objective };
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, c) in ineq.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let a = a_row(c);
            let ap = a.dot(&step);
            if ap > 1e-14 {
                let t = ((c.2 - a.dot(&x)) / ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += step * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    panic!("active-set oracle did not converge");
}
