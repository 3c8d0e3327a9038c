//! Convex quadratic programs
//!
//! ```text
//! minimise   ½ xᵀ H x + gᵀ x
//! subject to lb ≤ C x ≤ ub
//! ```
//!
//! solved by an operator-splitting (ADMM) iteration with Ruiz equilibration,
//! over-relaxation and an adaptive penalty. The linear system of each
//! iteration is split into variables that couple to others, which share one
//! dense Cholesky factor, and variables that only appear on the diagonal,
//! which are solved by division. Slack variables of soft constraints fall into
//! the second group, so their count does not enter the factorisation cost.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm_inf, Cholesky};
use crate::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n as u32).collect(), values: vec![1.0; n] }
    }

    /// Keeps every nonzero entry of `m`.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    out.indices.push(j as u32);
                    out.values.push(v);
                }
            }
            out.indptr[i + 1] = out.indices.len();
        }
        out
    }

    /// Builds from per-row `(column, value)` lists; duplicates are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut out = Self::zeros(rows.len(), ncols);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let start = out.indices.len();
            for (j, v) in row {
                if j >= ncols {
                    return Err(Error::DimensionMismatch(format!("column {j} in a matrix with {ncols} columns")));
                }
                if out.indices.len() > start && *out.indices.last().unwrap() as usize == j {
                    *out.values.last_mut().unwrap() += v;
                } else {
                    out.indices.push(j as u32);
                    out.values.push(v);
                }
            }
            out.indptr[i + 1] = out.indices.len();
        }
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    /// `out = A x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            let (idx, val) = self.row(i);
            *o = sparse_dot(idx, val, x);
        }
    }

    /// `out = Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate().take(self.nrows) {
            if *yi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[*j as usize] += v * yi;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                let p = next[*j as usize];
                indices[p] = i as u32;
                values[p] = *v;
                next[*j as usize] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, values }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                m[(i, *j as usize)] += v;
            }
        }
        m
    }

    fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).map(move |(j, v)| (i, *j as usize, *v))
            })
            .collect()
    }

    fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, v) in t {
            if i >= nrows {
                return Err(Error::DimensionMismatch(format!("row {i} in a matrix with {nrows} rows")));
            }
            rows[i].push((j, v));
        }
        Self::from_rows(ncols, rows)
    }

    /// `½ (A + Aᵀ)`.
    fn symmetrized(&self) -> Self {
        let t = self.transpose();
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let (a_idx, a_val) = self.row(i);
            let (b_idx, b_val) = t.row(i);
            let mut row: Vec<(usize, f64)> = a_idx.iter().zip(a_val).map(|(j, v)| (*j as usize, 0.5 * v)).collect();
            row.extend(b_idx.iter().zip(b_val).map(|(j, v)| (*j as usize, 0.5 * v)));
            rows.push(row);
        }
        let mut out = Self::from_rows(self.ncols, rows).expect("same shape");
        out.drop_zeros();
        out
    }

    fn drop_zeros(&mut self) {
        let mut indptr = vec![0; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                if *v != 0.0 {
                    indices.push(*j);
                    values.push(*v);
                }
            }
            indptr[i + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    fn scale(&mut self, left: &[f64], right: &[f64]) {
        for i in 0..self.nrows {
            let r = self.indptr[i]..self.indptr[i + 1];
            for p in r {
                self.values[p] *= left[i] * right[self.indices[p] as usize];
            }
        }
    }

    fn row_norms_inf(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| norm_inf(self.row(i).1)).collect()
    }

    fn col_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0_f64; self.ncols];
        for (j, v) in self.indices.iter().zip(&self.values) {
            let j = *j as usize;
            out[j] = out[j].max(v.abs());
        }
        out
    }
}

fn sparse_dot(idx: &[u32], val: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ic = idx.chunks_exact(4);
    let mut vc = val.chunks_exact(4);
    for (i, v) in (&mut ic).zip(&mut vc) {
        for l in 0..4 {
            acc[l] += v[l] * x[i[l] as usize];
        }
    }
    let tail: f64 = ic.remainder().iter().zip(vc.remainder()).map(|(j, v)| v * x[*j as usize]).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A convex QP `min ½ xᵀHx + gᵀx  s.t.  lb ≤ Cx ≤ ub`. Infinite bounds are
/// allowed; `lb = ub` encodes an equality.
#[derive(Clone, Debug, PartialEq)]
pub struct Qp {
    h: CsrMatrix,
    g: Vec<f64>,
    c: CsrMatrix,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

/// Smallest eigenvalue of `H` accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-9;

impl Qp {
    pub fn new(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::MalformedQp(format!("H is {}x{}", h.nrows(), h.ncols())));
        }
        Self::from_sparse(
            CsrMatrix::from_dense(h),
            g.as_slice().to_vec(),
            CsrMatrix::from_dense(c),
            lb.as_slice().to_vec(),
            ub.as_slice().to_vec(),
        )
    }

    /// Validates, symmetrises `H` and checks it is positive semidefinite.
    pub fn from_sparse(h: CsrMatrix, g: Vec<f64>, c: CsrMatrix, lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::MalformedQp(format!("H is {}x{} for {n} variables", h.nrows(), h.ncols())));
        }
        if c.ncols() != n {
            return Err(Error::MalformedQp(format!("C has {} columns for {n} variables", c.ncols())));
        }
        let k = c.nrows();
        if lb.len() != k || ub.len() != k {
            return Err(Error::MalformedQp(format!("{k} constraint rows but {} / {} bounds", lb.len(), ub.len())));
        }
        if h.values.iter().chain(&c.values).chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::MalformedQp("H, g and C must be finite".into()));
        }
        for i in 0..k {
            if lb[i].is_nan() || ub[i].is_nan() || lb[i] > ub[i] || lb[i] == f64::INFINITY || ub[i] == f64::NEG_INFINITY {
                return Err(Error::MalformedQp(format!("row {i} has bounds [{}, {}]", lb[i], ub[i])));
            }
        }
        let mut qp = Self { h: h.symmetrized(), g, c, lb, ub };
        qp.check_psd()?;
        Ok(qp)
    }

    fn check_psd(&mut self) -> Result<()> {
        let coupled = coupled_variables(&self.h, None);
        for j in 0..self.n() {
            if coupled.pos[j].is_none() {
                let hjj = diag_entry(&self.h, j);
                if hjj < -PSD_TOLERANCE {
                    return Err(Error::MalformedQp(format!("H has negative curvature {hjj:e} on variable {j}")));
                }
            }
        }
        if coupled.vars.is_empty() {
            return Ok(());
        }
        let mut block = dense_block(&self.h, &coupled, 1.0);
        let nc = coupled.vars.len();
        for i in 0..nc {
            block[i * nc + i] += PSD_TOLERANCE;
        }
        Cholesky::factor(&block, nc)
            .map_err(|_| Error::MalformedQp("H is not positive semidefinite".into()))?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.lb.len()
    }

    pub fn h(&self) -> &CsrMatrix {
        &self.h
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn c(&self) -> &CsrMatrix {
        &self.c
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.n()];
        self.h.mul_vec(x, &mut hx);
        0.5 * dot(x, &hx) + dot(&self.g, x)
    }

    /// Largest violation of `lb ≤ Cx ≤ ub`.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut cx = vec![0.0; self.n_constraints()];
        self.c.mul_vec(x, &mut cx);
        cx.iter()
            .zip(self.lb.iter().zip(&self.ub))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `‖Hx + g + Cᵀz‖∞`.
    pub fn stationarity(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.n()];
        let mut ctz = vec![0.0; self.n()];
        self.h.mul_vec(x, &mut hx);
        self.c.tr_mul_vec(z, &mut ctz);
        hx.iter().zip(&ctz).zip(&self.g).map(|((a, b), c)| (a + b + c).abs()).fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> QpFile {
        let opt = |v: f64| if v.is_finite() { Some(v) } else { None };
        QpFile {
            n: self.n(),
            k: self.n_constraints(),
            h: self.h.triplets(),
            g: self.g.clone(),
            c: self.c.triplets(),
            lb: self.lb.iter().map(|v| opt(*v)).collect(),
            ub: self.ub.iter().map(|v| opt(*v)).collect(),
        }
    }

    pub fn from_file(f: &QpFile) -> Result<Self> {
        let h = CsrMatrix::from_triplets(f.n, f.n, &f.h)?;
        let c = CsrMatrix::from_triplets(f.k, f.n, &f.c)?;
        let lb = f.lb.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let ub = f.ub.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        Self::from_sparse(h, f.g.clone(), c, lb, ub)
    }

    /// Writes the problem as JSON for offline inspection.
    pub fn dump(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// JSON form of a [`Qp`]: matrices as `(row, col, value)` triplets, `null`
/// for an infinite bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpFile {
    pub n: usize,
    pub k: usize,
    #[serde(rename = "H")]
    pub h: Vec<(usize, usize, f64)>,
    pub g: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<(usize, usize, f64)>,
    pub lb: Vec<Option<f64>>,
    pub ub: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    pub scaling_iter: usize,
    pub adaptive_rho: bool,
    /// Iterations between residual checks.
    pub check_interval: usize,
    pub warm_start: bool,
    /// Re-solve the KKT system on the detected active set after convergence.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 0.0,
            eps_prim_inf: 1e-5,
            max_iter: 20_000,
            scaling_iter: 10,
            adaptive_rho: true,
            check_interval: 5,
            warm_start: true,
            polish: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    MaxIter,
    PrimalInfeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint multipliers, `Hx + g + Cᵀz = 0` at the optimum.
    pub z: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
    pub refactorizations: usize,
    pub polished: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

fn row_kind(l: f64, u: f64) -> RowKind {
    if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RowKind::Free
    } else if u - l < 1e-12 * (1.0 + l.abs().max(u.abs())) {
        RowKind::Equality
    } else {
        RowKind::Inequality
    }
}

struct Coupling {
    vars: Vec<usize>,
    pos: Vec<Option<usize>>,
}

/// Variables with an off-diagonal entry in `h` or in `gram`.
fn coupled_variables(h: &CsrMatrix, gram: Option<&CsrMatrix>) -> Coupling {
    let n = h.nrows();
    let mut flag = vec![false; n];
    for m in std::iter::once(h).chain(gram) {
        for i in 0..n {
            let (idx, val) = m.row(i);
            if idx.iter().zip(val).any(|(j, v)| *j as usize != i && *v != 0.0) {
                flag[i] = true;
            }
        }
    }
    let vars: Vec<usize> = (0..n).filter(|j| flag[*j]).collect();
    let mut pos = vec![None; n];
    for (p, &j) in vars.iter().enumerate() {
        pos[j] = Some(p);
    }
    Coupling { vars, pos }
}

fn diag_entry(m: &CsrMatrix, j: usize) -> f64 {
    let (idx, val) = m.row(j);
    idx.iter().zip(val).filter(|(i, _)| **i as usize == j).map(|(_, v)| *v).sum()
}

/// Dense row-major block of `scale · m` on the coupled variables.
fn dense_block(m: &CsrMatrix, c: &Coupling, scale: f64) -> Vec<f64> {
    let nc = c.vars.len();
    let mut out = vec![0.0; nc * nc];
    for (a, &i) in c.vars.iter().enumerate() {
        let (idx, val) = m.row(i);
        for (j, v) in idx.iter().zip(val) {
            if let Some(b) = c.pos[*j as usize] {
                out[a * nc + b] += scale * v;
            }
        }
    }
    out
}

/// `Σ_i w_i a_i a_iᵀ` over the rows of `a`, with exactly cancelling entries
/// dropped.
fn weighted_gram(a: &CsrMatrix, at: &CsrMatrix, w: &[f64]) -> CsrMatrix {
    let n = a.ncols();
    let mut acc = vec![0.0; n];
    let mut touched = vec![false; n];
    let mut list = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let (rows_j, vals_j) = at.row(j);
        for (i, aij) in rows_j.iter().zip(vals_j) {
            let s = w[*i as usize] * aij;
            if s == 0.0 {
                continue;
            }
            let (idx, val) = a.row(*i as usize);
            for (k, aik) in idx.iter().zip(val) {
                let k = *k as usize;
                if !touched[k] {
                    touched[k] = true;
                    list.push(k);
                }
                acc[k] += s * aik;
            }
        }
        let mut row = Vec::with_capacity(list.len());
        for &k in &list {
            if acc[k] != 0.0 {
                row.push((k, acc[k]));
            }
            acc[k] = 0.0;
            touched[k] = false;
        }
        list.clear();
        rows.push(row);
    }
    CsrMatrix::from_rows(n, rows).expect("gram shape")
}

/// Reusable ADMM solver. Matrices are fixed at construction; the linear cost
/// and the bounds may be updated between solves, and each solve starts from
/// the previous iterate when warm starting is enabled.
pub struct QpSolver {
    settings: QpSettings,
    n: usize,
    k: usize,
    // scaled data: H̄ = c D H D, C̄ = E C D, ḡ = c D g, bounds E lb, E ub
    d: Vec<f64>,
    e: Vec<f64>,
    cost_scale: f64,
    h: CsrMatrix,
    a: CsrMatrix,
    at: CsrMatrix,
    g: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    kinds: Vec<RowKind>,
    original: Qp,
    rho: f64,
    rho_vec: Vec<f64>,
    linsys: LinearSystem,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    refactorizations: usize,
}

struct LinearSystem {
    coupling: Coupling,
    // dense H̄ + σI and weighted gram on the coupled block
    base: Vec<f64>,
    gram: Vec<f64>,
    // diagonals for all variables
    base_diag: Vec<f64>,
    gram_diag: Vec<f64>,
    chol: Option<Cholesky>,
    diag_inv: Vec<f64>,
}

impl LinearSystem {
    fn build(h: &CsrMatrix, a: &CsrMatrix, at: &CsrMatrix, kinds: &[RowKind], sigma: f64) -> Self {
        let w: Vec<f64> = kinds
            .iter()
            .map(|k| match k {
                RowKind::Free => 0.0,
                RowKind::Inequality => 1.0,
                RowKind::Equality => RHO_EQ_FACTOR,
            })
            .collect();
        let gram = weighted_gram(a, at, &w);
        let coupling = coupled_variables(h, Some(&gram));
        let n = h.nrows();
        let nc = coupling.vars.len();
        let mut base = dense_block(h, &coupling, 1.0);
        for i in 0..nc {
            base[i * nc + i] += sigma;
        }
        let gram_block = dense_block(&gram, &coupling, 1.0);
        let base_diag = (0..n).map(|j| diag_entry(h, j).max(0.0) + sigma).collect();
        let gram_diag = (0..n).map(|j| diag_entry(&gram, j)).collect();
        Self { coupling, base, gram: gram_block, base_diag, gram_diag, chol: None, diag_inv: vec![0.0; n] }
    }

    fn factor(&mut self, rho: f64) -> Result<()> {
        let nc = self.coupling.vars.len();
        if nc > 0 {
            let k: Vec<f64> = self.base.iter().zip(&self.gram).map(|(b, g)| b + rho * g).collect();
            self.chol = Some(Cholesky::factor(&k, nc)?);
        }
        for j in 0..self.diag_inv.len() {
            self.diag_inv[j] = 1.0 / (self.base_diag[j] + rho * self.gram_diag[j]);
        }
        Ok(())
    }

    fn solve(&self, rhs: &mut [f64], work: &mut Vec<f64>) {
        let c = &self.coupling;
        if let Some(chol) = &self.chol {
            work.clear();
            work.extend(c.vars.iter().map(|&j| rhs[j]));
            chol.solve_in_place(work);
            for (p, &j) in c.vars.iter().enumerate() {
                rhs[j] = work[p];
            }
        }
        for (j, r) in rhs.iter_mut().enumerate() {
            if c.pos[j].is_none() {
                *r *= self.diag_inv[j];
            }
        }
    }
}

impl QpSolver {
    pub fn new(qp: &Qp, settings: QpSettings) -> Result<Self> {
        if !(settings.alpha > 0.0 && settings.alpha < 2.0) || settings.sigma <= 0.0 || settings.rho <= 0.0 {
            return Err(Error::InvalidParameter("QP settings need 0 < α < 2, σ > 0, ρ > 0".into()));
        }
        let (n, k) = (qp.n(), qp.n_constraints());
        let mut h = qp.h.clone();
        let mut a = qp.c.clone();
        let mut g = qp.g.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; k];
        let clamp = |v: f64| if v < SCALE_MIN { 1.0 } else { 1.0 / v.min(SCALE_MAX).sqrt() };
        for _ in 0..settings.scaling_iter {
            let hn = h.col_norms_inf();
            let an = a.col_norms_inf();
            let dd: Vec<f64> = (0..n).map(|j| clamp(hn[j].max(an[j]))).collect();
            let ee: Vec<f64> = a.row_norms_inf().into_iter().map(clamp).collect();
            h.scale(&dd, &dd);
            a.scale(&ee, &dd);
            for j in 0..n {
                g[j] *= dd[j];
                d[j] *= dd[j];
            }
            for i in 0..k {
                e[i] *= ee[i];
            }
        }
        let mean_h = if n > 0 { h.col_norms_inf().iter().sum::<f64>() / n as f64 } else { 0.0 };
        let mut cost_scale = mean_h.max(norm_inf(&g));
        cost_scale = if cost_scale < SCALE_MIN { 1.0 } else { 1.0 / cost_scale.min(SCALE_MAX) };
        h.values.iter_mut().for_each(|v| *v *= cost_scale);
        g.iter_mut().for_each(|v| *v *= cost_scale);

        let at = a.transpose();
        let kinds: Vec<RowKind> = (0..k).map(|i| row_kind(qp.lb[i], qp.ub[i])).collect();
        let l = (0..k).map(|i| e[i] * qp.lb[i]).collect();
        let u = (0..k).map(|i| e[i] * qp.ub[i]).collect();
        let linsys = LinearSystem::build(&h, &a, &at, &kinds, settings.sigma);
        let rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
        let mut solver = Self {
            n,
            k,
            d,
            e,
            cost_scale,
            h,
            a,
            at,
            g,
            l,
            u,
            kinds,
            original: qp.clone(),
            rho,
            rho_vec: vec![0.0; k],
            linsys,
            x: vec![0.0; n],
            z: vec![0.0; k],
            y: vec![0.0; k],
            refactorizations: 0,
            settings,
        };
        solver.set_rho(rho)?;
        Ok(solver)
    }

    fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.rho = rho;
        for (r, kind) in self.rho_vec.iter_mut().zip(&self.kinds) {
            *r = match kind {
                RowKind::Free => RHO_MIN,
                RowKind::Inequality => rho,
                RowKind::Equality => RHO_EQ_FACTOR * rho,
            };
        }
        self.linsys.factor(rho)?;
        self.refactorizations += 1;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_coupled(&self) -> usize {
        self.linsys.coupling.vars.len()
    }

    pub fn update_linear_cost(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.n || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedQp("linear cost has wrong length or non-finite entries".into()));
        }
        for j in 0..self.n {
            self.g[j] = self.cost_scale * self.d[j] * g[j];
        }
        self.original.g.copy_from_slice(g);
        Ok(())
    }

    /// New bounds; rebuilds the factorisation if a row changes between
    /// free, inequality and equality.
    pub fn update_bounds(&mut self, lb: &[f64], ub: &[f64]) -> Result<()> {
        if lb.len() != self.k || ub.len() != self.k {
            return Err(Error::MalformedQp("bounds have wrong length".into()));
        }
        let mut kinds = Vec::with_capacity(self.k);
        for i in 0..self.k {
            if lb[i].is_nan() || ub[i].is_nan() || lb[i] > ub[i] || lb[i] == f64::INFINITY || ub[i] == f64::NEG_INFINITY {
                return Err(Error::MalformedQp(format!("row {i} has bounds [{}, {}]", lb[i], ub[i])));
            }
            kinds.push(row_kind(lb[i], ub[i]));
            self.l[i] = self.e[i] * lb[i];
            self.u[i] = self.e[i] * ub[i];
        }
        self.original.lb.copy_from_slice(lb);
        self.original.ub.copy_from_slice(ub);
        if kinds != self.kinds {
            self.kinds = kinds;
            self.linsys = LinearSystem::build(&self.h, &self.a, &self.at, &self.kinds, self.settings.sigma);
            self.set_rho(self.rho)?;
        }
        Ok(())
    }

    /// Sets the starting primal (and optionally dual) iterate, in the
    /// original units.
    pub fn warm_start(&mut self, x: &[f64], z: Option<&[f64]>) -> Result<()> {
        if x.len() != self.n || z.is_some_and(|z| z.len() != self.k) {
            return Err(Error::DimensionMismatch("warm start has wrong length".into()));
        }
        for j in 0..self.n {
            self.x[j] = x[j] / self.d[j];
        }
        self.a.mul_vec(&self.x.clone(), &mut self.z);
        match z {
            Some(z) => {
                for i in 0..self.k {
                    self.y[i] = self.cost_scale * z[i] / self.e[i];
                }
            }
            None => self.y.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(())
    }

    pub fn solve(&mut self) -> Result<QpSolution> {
        let (n, k) = (self.n, self.k);
        let s = self.settings.clone();
        if !s.warm_start {
            self.x.iter_mut().for_each(|v| *v = 0.0);
            self.z.iter_mut().for_each(|v| *v = 0.0);
            self.y.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..k {
            self.z[i] = self.z[i].clamp(self.l[i], self.u[i]);
        }
        let refactor_start = self.refactorizations;
        let mut rhs = vec![0.0; n];
        let mut work = Vec::with_capacity(self.n_coupled());
        let mut tmp_k = vec![0.0; k];
        let mut ax = vec![0.0; k];
        let mut hx = vec![0.0; n];
        let mut aty = vec![0.0; n];
        self.a.mul_vec(&self.x, &mut ax);
        let mut y_prev = self.y.clone();
        let mut status = QpStatus::MaxIter;
        let mut iterations = 0;
        let mut residuals = (f64::INFINITY, f64::INFINITY);
        let mut next_rho_check = 25usize;

        for it in 1..=s.max_iter {
            iterations = it;
            let check = it % s.check_interval.max(1) == 0 || it == s.max_iter;
            if check {
                y_prev.copy_from_slice(&self.y);
            }
            for i in 0..k {
                tmp_k[i] = self.rho_vec[i] * self.z[i] - self.y[i];
            }
            self.at.mul_vec(&tmp_k, &mut rhs);
            for j in 0..n {
                rhs[j] += s.sigma * self.x[j] - self.g[j];
            }
            self.linsys.solve(&mut rhs, &mut work);
            // rhs now holds x̃
            self.a.mul_vec(&rhs, &mut tmp_k);
            for j in 0..n {
                self.x[j] = s.alpha * rhs[j] + (1.0 - s.alpha) * self.x[j];
            }
            for i in 0..k {
                ax[i] = s.alpha * tmp_k[i] + (1.0 - s.alpha) * ax[i];
                let zr = s.alpha * tmp_k[i] + (1.0 - s.alpha) * self.z[i];
                let zn = (zr + self.y[i] / self.rho_vec[i]).clamp(self.l[i], self.u[i]);
                self.y[i] += self.rho_vec[i] * (zr - zn);
                self.z[i] = zn;
            }
            if !check {
                continue;
            }

            self.h.mul_vec(&self.x, &mut hx);
            self.at.mul_vec(&self.y, &mut aty);
            let (prim, dual, eps_prim, eps_dual) = self.residuals(&ax, &hx, &aty);
            residuals = (prim, dual);
            if prim <= eps_prim && dual <= eps_dual {
                status = QpStatus::Solved;
                break;
            }
            if self.primal_infeasible(&y_prev, &mut tmp_k, &mut rhs) {
                status = QpStatus::PrimalInfeasible;
                break;
            }
            if s.adaptive_rho && it >= next_rho_check {
                next_rho_check = it + 25;
                let prim_s = (0..k).map(|i| (ax[i] - self.z[i]).abs()).fold(0.0, f64::max)
                    / norm_inf(&ax).max(norm_inf(&self.z)).max(1e-12);
                let dual_s = (0..n).map(|j| (hx[j] + self.g[j] + aty[j]).abs()).fold(0.0, f64::max)
                    / norm_inf(&hx).max(norm_inf(&aty)).max(norm_inf(&self.g)).max(1e-12);
                let new_rho = (self.rho * (prim_s / dual_s.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                    self.set_rho(new_rho)?;
                }
            }
        }

        let mut x: Vec<f64> = (0..n).map(|j| self.d[j] * self.x[j]).collect();
        let mut z: Vec<f64> = (0..k).map(|i| self.e[i] * self.y[i] / self.cost_scale).collect();
        let mut polished = false;
        if s.polish && status == QpStatus::Solved {
            if let Some((px, pz)) = self.polish(&z) {
                x = px;
                z = pz;
                polished = true;
            }
        }
        Ok(QpSolution {
            objective: self.original.objective(&x),
            x,
            z,
            status,
            iterations,
            primal_res: residuals.0,
            dual_res: residuals.1,
            refactorizations: self.refactorizations - refactor_start,
            polished,
        })
    }

    /// Solves the equality-constrained problem on the active set guessed from
    /// the multipliers; `None` if that system is singular or its solution is
    /// not optimal.
    fn polish(&self, z: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let qp = &self.original;
        let (n, k) = (self.n, self.k);
        let mut cx = vec![0.0; k];
        let x_admm: Vec<f64> = (0..n).map(|j| self.d[j] * self.x[j]).collect();
        qp.c.mul_vec(&x_admm, &mut cx);
        // (row, bound)
        let mut active = Vec::new();
        for i in 0..k {
            let lower = qp.lb[i].is_finite() && (self.kinds[i] == RowKind::Equality || z[i] < 0.0 && cx[i] - qp.lb[i] < -z[i]);
            let upper = qp.ub[i].is_finite() && (z[i] > 0.0 && qp.ub[i] - cx[i] < z[i]);
            if self.kinds[i] == RowKind::Equality {
                active.push((i, qp.ub[i]));
            } else if upper {
                active.push((i, qp.ub[i]));
            } else if lower {
                active.push((i, qp.lb[i]));
            }
        }
        let na = active.len();
        let mut kkt = DMatrix::zeros(n + na, n + na);
        for i in 0..n {
            let (idx, val) = qp.h.row(i);
            for (j, v) in idx.iter().zip(val) {
                kkt[(i, *j as usize)] += v;
            }
        }
        let mut rhs = DVector::zeros(n + na);
        for j in 0..n {
            rhs[j] = -qp.g[j];
        }
        for (a, &(i, b)) in active.iter().enumerate() {
            let (idx, val) = qp.c.row(i);
            for (j, v) in idx.iter().zip(val) {
                kkt[(n + a, *j as usize)] = *v;
                kkt[(*j as usize, n + a)] = *v;
            }
            rhs[n + a] = b;
        }
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let mut zp = vec![0.0; k];
        for (a, &(i, _)) in active.iter().enumerate() {
            zp[i] = sol[n + a];
        }
        let tol = self.settings.eps_abs;
        let sign_ok = active.iter().all(|&(i, b)| {
            self.kinds[i] == RowKind::Equality || (b == qp.ub[i] && zp[i] >= -tol) || (b == qp.lb[i] && zp[i] <= tol)
        });
        let g_inf = norm_inf(&qp.g);
        if sign_ok
            && qp.infeasibility(&x) <= tol
            && qp.stationarity(&x, &zp) <= tol * (1.0 + g_inf)
        {
            Some((x, zp))
        } else {
            None
        }
    }

    /// Unscaled residuals and their tolerances.
    fn residuals(&self, ax: &[f64], hx: &[f64], aty: &[f64]) -> (f64, f64, f64, f64) {
        let s = &self.settings;
        let mut prim = 0.0_f64;
        let mut ax_n = 0.0_f64;
        let mut z_n = 0.0_f64;
        for i in 0..self.k {
            let inv = 1.0 / self.e[i];
            prim = prim.max(((ax[i] - self.z[i]) * inv).abs());
            ax_n = ax_n.max((ax[i] * inv).abs());
            z_n = z_n.max((self.z[i] * inv).abs());
        }
        let c_inv = 1.0 / self.cost_scale;
        let mut dual = 0.0_f64;
        let (mut hx_n, mut aty_n, mut g_n) = (0.0_f64, 0.0_f64, 0.0_f64);
        for j in 0..self.n {
            let inv = c_inv / self.d[j];
            dual = dual.max(((hx[j] + self.g[j] + aty[j]) * inv).abs());
            hx_n = hx_n.max((hx[j] * inv).abs());
            aty_n = aty_n.max((aty[j] * inv).abs());
            g_n = g_n.max((self.g[j] * inv).abs());
        }
        let eps_prim = s.eps_abs + s.eps_rel * ax_n.max(z_n);
        let eps_dual = s.eps_abs + s.eps_rel * hx_n.max(aty_n).max(g_n);
        (prim, dual, eps_prim, eps_dual)
    }

    fn primal_infeasible(&self, y_prev: &[f64], dy: &mut [f64], work: &mut [f64]) -> bool {
        let eps = self.settings.eps_prim_inf;
        let mut norm = 0.0_f64;
        for i in 0..self.k {
            dy[i] = self.y[i] - y_prev[i];
            norm = norm.max((self.e[i] * dy[i]).abs());
        }
        if norm < 1e-30 {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.k {
            let v = dy[i];
            if v > 0.0 {
                if self.u[i] == f64::INFINITY {
                    return false;
                }
                support += self.u[i] * v;
            } else if v < 0.0 {
                if self.l[i] == f64::NEG_INFINITY {
                    return false;
                }
                support += self.l[i] * v;
            }
        }
        if support >= -eps * norm {
            return false;
        }
        self.at.mul_vec(dy, work);
        (0..self.n).all(|j| (work[j] / self.d[j]).abs() <= eps * norm)
    }
}

/// One-shot solve from a cold start.
pub fn solve_qp(qp: &Qp, settings: &QpSettings) -> Result<QpSolution> {
    QpSolver::new(qp, settings.clone())?.solve()
}
