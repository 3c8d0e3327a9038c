//! MIMO ARX identification by least squares (LS) and by correlation-function
//! least squares (COR-LS).
//!
//! Both methods solve `min_Z ||M Z - V||_F` for the stacked parameter matrix
//!
//! ```text
//! Z = [B_1^T; ...; B_σ^T; -A_1^T; ...; -A_σ^T]      (σ(m+p) x p)
//! ```
//!
//! LS regresses each output sample on the σ previous inputs and outputs.
//! COR-LS instead regresses the input/output cross-correlation at shift κ
//! on the auto-correlations and cross-correlations at shifts κ-1 ... κ-σ:
//!
//! ```text
//! θ_uy(κ) = Σ_i θ_uu(κ-i) B_i^T - θ_uy(κ-i) A_i^T,   κ = -P+σ ... P
//! ```
//!
//! Output noise that is uncorrelated with the input drops out of the
//! cross-correlations, which makes the COR-LS estimate consistent where LS
//! is biased.
//!
//! Signals are centred on their sample means before either method runs; the
//! means are kept with the parameters and the predictor works in deviations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LS", alias = "ls")]
    Ls,
    #[serde(rename = "CORLS", alias = "corls", alias = "COR-LS")]
    CorLs,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "LS" => Ok(Method::Ls),
            "CORLS" => Ok(Method::CorLs),
            other => Err(Error::InvalidParameter(format!("unknown identification method {other}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ls => "LS",
            Method::CorLs => "CORLS",
        })
    }
}

/// ARX predictor coefficients plus the operating point they were fitted at.
#[derive(Clone, Debug, PartialEq)]
pub struct ArxParams {
    pub sigma: usize,
    /// `A_1 ... A_σ`, each `p x p`.
    pub a: Vec<DMatrix<f64>>,
    /// `B_1 ... B_σ`, each `p x m`.
    pub b: Vec<DMatrix<f64>>,
    pub u_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
}

impl ArxParams {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        u_mean: DVector<f64>,
        y_mean: DVector<f64>,
    ) -> Result<Self> {
        let sigma = a.len();
        if sigma == 0 || b.len() != sigma {
            return Err(Error::DimensionMismatch(format!("need σ >= 1 A and B blocks, got {} / {}", a.len(), b.len())));
        }
        let p = a[0].nrows();
        let m = b[0].ncols();
        let ok = a.iter().all(|ai| ai.shape() == (p, p))
            && b.iter().all(|bi| bi.shape() == (p, m))
            && u_mean.len() == m
            && y_mean.len() == p;
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent ARX block shapes".into()));
        }
        let finite = a.iter().chain(&b).all(|x| x.iter().all(|v| v.is_finite()))
            && u_mean.iter().chain(y_mean.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("ARX parameters"));
        }
        Ok(Self { sigma, a, b, u_mean, y_mean })
    }

    pub fn n_inputs(&self) -> usize {
        self.u_mean.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.y_mean.len()
    }

    /// Stacks the blocks into `Z`.
    pub fn to_stacked(&self) -> DMatrix<f64> {
        let (m, p, s) = (self.n_inputs(), self.n_outputs(), self.sigma);
        let mut z = DMatrix::zeros(s * (m + p), p);
        for i in 0..s {
            z.view_mut((i * m, 0), (m, p)).copy_from(&self.b[i].transpose());
            z.view_mut((s * m + i * p, 0), (p, p)).copy_from(&(-self.a[i].transpose()));
        }
        z
    }

    /// Inverse of [`ArxParams::to_stacked`].
    pub fn from_stacked(z: &DMatrix<f64>, sigma: usize, u_mean: DVector<f64>, y_mean: DVector<f64>) -> Result<Self> {
        let (m, p) = (u_mean.len(), y_mean.len());
        if z.shape() != (sigma * (m + p), p) {
            return Err(Error::DimensionMismatch(format!(
                "Z is {:?}, expected {:?}",
                z.shape(),
                (sigma * (m + p), p)
            )));
        }
        let b = (0..sigma).map(|i| z.view((i * m, 0), (m, p)).transpose()).collect();
        let a = (0..sigma).map(|i| -z.view((sigma * m + i * p, 0), (p, p)).transpose()).collect();
        Self::new(a, b, u_mean, y_mean)
    }

    /// Companion matrix of the output recursion `y_k = -Σ A_i y_{k-i}`.
    pub fn companion(&self) -> DMatrix<f64> {
        let p = self.n_outputs();
        let n = p * self.sigma;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..self.sigma {
            c.view_mut((0, i * p), (p, p)).copy_from(&(-&self.a[i]));
        }
        for i in 1..self.sigma {
            c.view_mut((i * p, (i - 1) * p), (p, p)).fill_with_identity();
        }
        c
    }

    /// Largest modulus among the companion eigenvalues.
    pub fn spectral_radius(&self) -> f64 {
        self.companion().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> ArxParamsFile {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        ArxParamsFile {
            sigma: self.sigma,
            p: self.n_outputs(),
            m: self.n_inputs(),
            a: self.a.iter().map(rows).collect(),
            b: self.b.iter().map(rows).collect(),
            u_mean: self.u_mean.iter().copied().collect(),
            y_mean: self.y_mean.iter().copied().collect(),
            provenance: None,
        }
    }

    pub fn from_file(f: &ArxParamsFile) -> Result<Self> {
        let mat = |rows: &Vec<Vec<f64>>, r: usize, c: usize| -> Result<DMatrix<f64>> {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(Error::Format(format!("expected a {r}x{c} matrix")));
            }
            Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
        };
        if f.a.len() != f.sigma || f.b.len() != f.sigma {
            return Err(Error::Format(format!("sigma = {} but {} A / {} B blocks", f.sigma, f.a.len(), f.b.len())));
        }
        let a = f.a.iter().map(|x| mat(x, f.p, f.p)).collect::<Result<Vec<_>>>()?;
        let b = f.b.iter().map(|x| mat(x, f.p, f.m)).collect::<Result<Vec<_>>>()?;
        if f.u_mean.len() != f.m || f.y_mean.len() != f.p {
            return Err(Error::Format("mean vectors do not match m / p".into()));
        }
        Self::new(a, b, DVector::from_vec(f.u_mean.clone()), DVector::from_vec(f.y_mean.clone()))
    }

    pub fn save(&self, path: &Path, provenance: Option<serde_json::Value>) -> Result<()> {
        let mut file = self.to_file();
        file.provenance = provenance;
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, ArxParamsFile)> {
        let file: ArxParamsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((Self::from_file(&file)?, file))
    }
}

/// JSON layout of [`ArxParams`]; matrices are nested row-major arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArxParamsFile {
    pub sigma: usize,
    pub p: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    pub u_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Sample correlation `1/(N+1) Σ_k f_k g_{k+κ}`; negative shifts use
/// `θ_fg(-κ) = θ_gf(κ)`.
pub fn xcorr(f: &[f64], g: &[f64], shift: i64) -> Result<f64> {
    let n = f.len();
    if g.len() != n {
        return Err(Error::DimensionMismatch(format!("xcorr of lengths {} and {}", n, g.len())));
    }
    if shift.unsigned_abs() as usize >= n {
        return Err(Error::ShiftOutOfRange { shift, len: n });
    }
    let (f, g, k) = if shift >= 0 { (f, g, shift as usize) } else { (g, f, (-shift) as usize) };
    let s: f64 = f[..n - k].iter().zip(&g[k..]).map(|(a, b)| a * b).sum();
    Ok(s / (n as f64 + 1.0))
}

/// Auto- and cross-correlation matrices for shifts `-P ..= P`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSet {
    pub p_max: usize,
    pub n_samples: usize,
    uu: Vec<DMatrix<f64>>,
    uy: Vec<DMatrix<f64>>,
}

impl CorrelationSet {
    pub fn from_parts(p_max: usize, n_samples: usize, uu: Vec<DMatrix<f64>>, uy: Vec<DMatrix<f64>>) -> Result<Self> {
        if uu.len() != 2 * p_max + 1 || uy.len() != 2 * p_max + 1 {
            return Err(Error::DimensionMismatch("correlation maps must cover -P..=P".into()));
        }
        Ok(Self { p_max, n_samples, uu, uy })
    }

    fn index(&self, shift: i64) -> usize {
        assert!(shift.unsigned_abs() as usize <= self.p_max, "shift {shift} outside ±{}", self.p_max);
        (shift + self.p_max as i64) as usize
    }

    /// `θ_uu(κ)`, `m x m`.
    pub fn uu(&self, shift: i64) -> &DMatrix<f64> {
        &self.uu[self.index(shift)]
    }

    /// `θ_uy(κ)`, `m x p`.
    pub fn uy(&self, shift: i64) -> &DMatrix<f64> {
        &self.uy[self.index(shift)]
    }

    pub fn shifts(&self) -> impl Iterator<Item = i64> {
        let p = self.p_max as i64;
        -p..=p
    }

    pub fn n_inputs(&self) -> usize {
        self.uu[0].nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.uy[0].ncols()
    }
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}

/// Correlations of the dataset's signals as given (no centring here).
pub fn build_correlations(ds: &Dataset, p_max: usize) -> Result<CorrelationSet> {
    let n = ds.len();
    if p_max >= n {
        return Err(Error::InsufficientData(format!("P = {p_max} needs more than {n} samples")));
    }
    let u = columns(&ds.inputs);
    let y = columns(&ds.outputs);
    let (m, p) = (u.len(), y.len());
    let mut uu = Vec::with_capacity(2 * p_max + 1);
    let mut uy = Vec::with_capacity(2 * p_max + 1);
    for shift in -(p_max as i64)..=(p_max as i64) {
        let mut a = DMatrix::zeros(m, m);
        let mut c = DMatrix::zeros(m, p);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = xcorr(&u[i], &u[j], shift)?;
            }
            for j in 0..p {
                c[(i, j)] = xcorr(&u[i], &y[j], shift)?;
            }
        }
        uu.push(a);
        uy.push(c);
    }
    CorrelationSet::from_parts(p_max, n, uu, uy)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrDecayReport {
    /// Largest `|θ|` entry found beyond `P`.
    pub max_abs: f64,
    pub tol: f64,
    pub shifts_checked: usize,
    pub pass: bool,
}

/// Checks that the correlations have decayed beyond `P` by evaluating shifts
/// `±(P+1) ..= ±(P+margin)` of the signals in `ds`. Advisory only.
pub fn check_corr_decay(ds: &Dataset, p_max: usize, margin_shifts: usize, tol: f64) -> Result<CorrDecayReport> {
    let n = ds.len();
    let u = columns(&ds.inputs);
    let y = columns(&ds.outputs);
    let mut max_abs = 0.0_f64;
    let mut checked = 0;
    for d in 1..=margin_shifts {
        let k = (p_max + d) as i64;
        if k as usize >= n {
            break;
        }
        checked += 1;
        for shift in [k, -k] {
            for ui in &u {
                for g in u.iter().chain(&y) {
                    max_abs = max_abs.max(xcorr(ui, g, shift)?.abs());
                }
            }
        }
    }
    Ok(CorrDecayReport { max_abs, tol, shifts_checked: checked, pass: max_abs <= tol })
}

/// Correlation regression `M Z ≈ V` with one `m`-row block per
/// `κ = -P+σ ..= P`.
pub fn build_corls_system(cs: &CorrelationSet, sigma: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if sigma == 0 || sigma > cs.p_max {
        return Err(Error::InvalidParameter(format!("need 1 <= σ <= P (σ = {sigma}, P = {})", cs.p_max)));
    }
    let (m, p) = (cs.n_inputs(), cs.n_outputs());
    let p_max = cs.p_max as i64;
    let s = sigma as i64;
    let blocks = (2 * p_max - s + 1) as usize;
    let mut mm = DMatrix::zeros(blocks * m, sigma * (m + p));
    let mut v = DMatrix::zeros(blocks * m, p);
    for (blk, kappa) in (-p_max + s..=p_max).enumerate() {
        let r = blk * m;
        for i in 1..=sigma {
            let lag = kappa - i as i64;
            mm.view_mut((r, (i - 1) * m), (m, m)).copy_from(cs.uu(lag));
            mm.view_mut((r, sigma * m + (i - 1) * p), (m, p)).copy_from(cs.uy(lag));
        }
        v.view_mut((r, 0), (m, p)).copy_from(cs.uy(kappa));
    }
    Ok((mm, v))
}

/// Direct regression: row `k` of `M` is
/// `[u(k-1)^T ... u(k-σ)^T, y(k-1)^T ... y(k-σ)^T]` and row `k` of `V` is
/// `y(k)^T`, for `k = σ .. N-1`.
pub fn build_ls_system(ds: &Dataset, sigma: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ds.len();
    if sigma == 0 || n <= sigma {
        return Err(Error::InsufficientData(format!("LS with σ = {sigma} needs more than {n} samples")));
    }
    let (m, p) = (ds.n_inputs(), ds.n_outputs());
    let rows = n - sigma;
    let mut mm = DMatrix::zeros(rows, sigma * (m + p));
    let mut v = DMatrix::zeros(rows, p);
    for r in 0..rows {
        let k = r + sigma;
        for i in 1..=sigma {
            mm.view_mut((r, (i - 1) * m), (1, m)).copy_from(&ds.inputs.row(k - i));
            mm.view_mut((r, sigma * m + (i - 1) * p), (1, p)).copy_from(&ds.outputs.row(k - i));
        }
        v.row_mut(r).copy_from(&ds.outputs.row(k));
    }
    Ok((mm, v))
}

/// Ratio below which the (column-equilibrated) regression matrix counts as
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Minimises `||M Z - V||_F` through a Householder QR of the
/// column-equilibrated `M`.
pub fn solve_frobenius_ls(m: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if v.nrows() != rows {
        return Err(Error::DimensionMismatch(format!("M has {rows} rows, V has {}", v.nrows())));
    }
    if rows < cols || cols == 0 {
        return Err(Error::InsufficientData(format!("{rows} equations for {cols} unknowns")));
    }
    if m.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("regression data"));
    }
    let scale: Vec<f64> = (0..cols).map(|j| m.column(j).norm()).collect();
    if scale.iter().any(|s| *s == 0.0) {
        return Err(Error::InsufficientExcitation { ratio: 0.0 });
    }
    let mut ms = m.clone();
    for (j, s) in scale.iter().enumerate() {
        ms.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = ms.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let ratio = sv.min() / sv.max();
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::InsufficientExcitation { ratio });
    }
    let mut qtv = v.clone();
    qr.q_tr_mul(&mut qtv);
    let top = qtv.rows(0, cols).into_owned();
    let mut z = r
        .solve_upper_triangular(&top)
        .ok_or(Error::InsufficientExcitation { ratio })?;
    for (j, s) in scale.iter().enumerate() {
        z.row_mut(j).scale_mut(1.0 / s);
    }
    Ok(z)
}

/// Smallest over largest singular value of `M` after scaling its columns to
/// unit norm.
pub fn scaled_condition_ratio(m: &DMatrix<f64>) -> f64 {
    let mut ms = m.clone();
    for mut c in ms.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let sv = ms.singular_values();
    sv.min() / sv.max()
}

/// Identifies ARX parameters of order `sigma`. `p_max` is required for
/// COR-LS and ignored by LS.
pub fn identify(ds: &Dataset, sigma: usize, method: Method, p_max: Option<usize>) -> Result<ArxParams> {
    let (u_mean, y_mean) = ds.means();
    let centered = ds.centered(&u_mean, &y_mean);
    let (m, v) = match method {
        Method::Ls => build_ls_system(&centered, sigma)?,
        Method::CorLs => {
            let p_max = p_max.ok_or_else(|| Error::InvalidParameter("COR-LS requires P".into()))?;
            let cs = build_correlations(&centered, p_max)?;
            build_corls_system(&cs, sigma)?
        }
    };
    let z = solve_frobenius_ls(&m, &v)?;
    ArxParams::from_stacked(&z, sigma, u_mean, y_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Split;

    fn dataset(u: DMatrix<f64>, y: DMatrix<f64>) -> Dataset {
        Dataset::new(60.0, u, y, 0, Split::Train).unwrap()
    }

    #[test]
    fn xcorr_basics() {
        let ones = vec![1.0; 9];
        assert!((xcorr(&ones, &ones, 0).unwrap() - 0.9).abs() < 1e-15);
        let f: Vec<f64> = (0..20).map(|k| (k as f64 * 0.7).sin()).collect();
        let zeros = vec![0.0; 20];
        for k in -19..=19 {
            assert_eq!(xcorr(&f, &zeros, k).unwrap(), 0.0);
        }
        let g: Vec<f64> = (0..20).map(|k| (k as f64 * 1.3).cos()).collect();
        assert_eq!(xcorr(&f, &g, -3).unwrap(), xcorr(&g, &f, 3).unwrap());
        assert!(matches!(xcorr(&f, &g, 20), Err(Error::ShiftOutOfRange { .. })));
        assert!(xcorr(&f, &g[..5], 0).is_err());
    }

    #[test]
    fn correlations_of_constant_input() {
        let n = 40;
        let c = 2.5;
        let u = DMatrix::from_element(n, 1, c);
        let y = DMatrix::from_fn(n, 1, |k, _| k as f64);
        let cs = build_correlations(&dataset(u, y), 5).unwrap();
        assert_eq!(cs.shifts().count(), 11);
        assert!((cs.uu(0)[(0, 0)] - n as f64 / (n as f64 + 1.0) * c * c).abs() < 1e-12);
        assert!(build_correlations(&dataset(DMatrix::zeros(5, 1), DMatrix::zeros(5, 1)), 5).is_err());
    }

    #[test]
    fn delayed_output_shifts_cross_correlation() {
        let n = 200;
        let u: Vec<f64> = (0..n).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let y: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { u[k - 1] }).collect();
        let cs = build_correlations(&dataset(DMatrix::from_vec(n, 1, u.clone()), DMatrix::from_vec(n, 1, y.clone())), 6).unwrap();
        for k in -6..=6_i64 {
            assert_eq!(cs.uy(k)[(0, 0)], xcorr(&u, &y, k).unwrap());
        }
        // y(k) = u(k-1): θ_uy(κ) = Σ u(k) u(k+κ-1), i.e. θ_uu(κ-1) up to one edge term
        for k in 1..=6_i64 {
            let edge = u[n - k as usize] * u[n - 1] / (n as f64 + 1.0);
            assert!((cs.uy(k)[(0, 0)] + edge - cs.uu(k - 1)[(0, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn corls_dimensions() {
        let n = 300;
        let u = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3)) % 7) as f64);
        let y = DMatrix::from_fn(n, 3, |i, j| ((i + j) % 5) as f64);
        let cs = build_correlations(&dataset(u, y), 50).unwrap();
        let (m, v) = build_corls_system(&cs, 3).unwrap();
        assert_eq!(m.shape(), (196, 15));
        assert_eq!(v.shape(), (196, 3));
        assert!(build_corls_system(&cs, 51).is_err());

        let zero = CorrelationSet::from_parts(
            4,
            10,
            vec![DMatrix::zeros(2, 2); 9],
            vec![DMatrix::zeros(2, 3); 9],
        )
        .unwrap();
        let (m, v) = build_corls_system(&zero, 2).unwrap();
        assert!(m.iter().chain(v.iter()).all(|x| *x == 0.0));
    }

    #[test]
    fn ls_dimensions() {
        let ds = dataset(DMatrix::zeros(5, 2), DMatrix::zeros(5, 3));
        let (m, v) = build_ls_system(&ds, 3).unwrap();
        assert_eq!(m.shape(), (2, 15));
        assert_eq!(v.shape(), (2, 3));
        assert!(build_ls_system(&ds.slice(0, 3), 3).is_err());
    }

    #[test]
    fn frobenius_ls_identity_and_consistent() {
        let m = DMatrix::<f64>::identity(4, 4);
        let v = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        let z = solve_frobenius_ls(&m, &v).unwrap();
        assert!((z - &v).abs().max() < 1e-14);

        let m = DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 13) % 17) as f64 - 8.0 + 0.1 * (i * j) as f64);
        let z_true = DMatrix::from_fn(4, 3, |i, j| i as f64 - j as f64 * 0.5);
        let v = &m * &z_true;
        let z = solve_frobenius_ls(&m, &v).unwrap();
        assert!((z - z_true).abs().max() < 1e-12);
    }

    #[test]
    fn frobenius_ls_rejects_rank_deficiency() {
        let mut m = DMatrix::from_fn(20, 3, |i, j| ((i + 1) * (j + 2)) as f64 + (i as f64).sin());
        let c0 = m.column(0).into_owned();
        m.set_column(2, &(c0 * 2.0));
        let v = DMatrix::from_element(20, 1, 1.0);
        assert!(matches!(solve_frobenius_ls(&m, &v), Err(Error::InsufficientExcitation { .. })));
    }

    #[test]
    fn corr_decay_report() {
        let n = 500;
        let u = DMatrix::from_element(n, 1, 3.0);
        let y = DMatrix::from_element(n, 1, 1.0);
        let ds = dataset(u, y);
        assert!(!check_corr_decay(&ds, 10, 5, 0.1).unwrap().pass);
        let vacuous = check_corr_decay(&ds, 10, 0, 0.1).unwrap();
        assert!(vacuous.pass && vacuous.shifts_checked == 0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("corls".parse::<Method>().unwrap(), Method::CorLs);
        assert_eq!("COR-LS".parse::<Method>().unwrap(), Method::CorLs);
        assert_eq!("LS".parse::<Method>().unwrap(), Method::Ls);
        assert!("ml".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::CorLs).unwrap(), "\"CORLS\"");
    }
}
