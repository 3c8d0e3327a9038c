//! Single-step and multi-step evaluation of an ARX predictor.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::datagen::Dataset;
use crate::sysid::ArxParams;
use crate::{Error, Result};

/// Regressor buffers for one prediction, newest first: `y[i] = y(t_{j-1-i})`
/// and `u[i] = u(t_{j-1-i})` when predicting `y(t_j)`. Values are absolute.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl History {
    pub fn new(y: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Result<Self> {
        if y.is_empty() || y.len() != u.len() {
            return Err(Error::DimensionMismatch(format!("history buffers of length {} and {}", y.len(), u.len())));
        }
        Ok(Self { y, u })
    }

    /// Every entry at the parameters' operating point.
    pub fn at_means(params: &ArxParams) -> Self {
        Self {
            y: vec![params.y_mean.clone(); params.sigma],
            u: vec![params.u_mean.clone(); params.sigma],
        }
    }

    /// Regressors for predicting row `j` of `ds`.
    pub fn from_dataset(ds: &Dataset, j: usize, sigma: usize) -> Result<Self> {
        if sigma == 0 || j < sigma || j > ds.len() {
            return Err(Error::InsufficientData(format!("row {j} has no full σ = {sigma} history")));
        }
        Ok(Self {
            y: (1..=sigma).map(|i| ds.output(j - i)).collect(),
            u: (1..=sigma).map(|i| ds.input(j - i)).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.y.len()
    }

    /// Pushes the newest input/output pair, dropping the oldest.
    pub fn shift(&mut self, u: DVector<f64>, y: DVector<f64>) {
        self.u.pop();
        self.u.insert(0, u);
        self.y.pop();
        self.y.insert(0, y);
    }
}

fn check_history(params: &ArxParams, h: &History) {
    assert_eq!(h.order(), params.sigma, "history length must equal σ");
}

/// `ŷ = ȳ + Σ B_i (u_i - ū) - A_i (y_i - ȳ)`.
pub fn predict_one(params: &ArxParams, h: &History) -> DVector<f64> {
    check_history(params, h);
    let mut out = params.y_mean.clone();
    for i in 0..params.sigma {
        out += &params.b[i] * (&h.u[i] - &params.u_mean);
        out -= &params.a[i] * (&h.y[i] - &params.y_mean);
    }
    out
}

/// Open-loop rollout: prediction `s` is fed back as output history for
/// prediction `s + 1`, together with `u_future` row `s`. The first prediction
/// comes from `h0` alone, so the last input row only pads the horizon.
pub fn rollout(params: &ArxParams, h0: &History, u_future: &DMatrix<f64>) -> DMatrix<f64> {
    check_history(params, h0);
    let n = u_future.nrows();
    let mut out = DMatrix::zeros(n, params.n_outputs());
    let mut h = h0.clone();
    for s in 0..n {
        if s > 0 {
            let y_prev = out.row(s - 1).transpose();
            h.shift(u_future.row(s - 1).transpose(), y_prev);
        }
        out.row_mut(s).copy_from(&predict_one(params, &h).transpose());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Largest absolute error.
    pub mae: Vec<f64>,
    pub count: usize,
}

impl ErrorStats {
    /// Column statistics of an `n x p` error matrix; std uses `n - 1`.
    pub fn from_errors(errors: &DMatrix<f64>) -> Self {
        let n = errors.nrows();
        let cols = errors.ncols();
        let mut mean = vec![0.0; cols];
        let mut std = vec![0.0; cols];
        let mut mae = vec![0.0; cols];
        for j in 0..cols {
            let c = errors.column(j);
            if n == 0 {
                continue;
            }
            let m = c.sum() / n as f64;
            mean[j] = m;
            std[j] = if n > 1 {
                (c.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            mae[j] = c.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
        }
        Self { mean, std, mae, count: n }
    }
}

#[derive(Clone, Debug)]
pub struct SingleStepReport {
    pub stats: ErrorStats,
    /// Row index in the dataset of each error.
    pub rows: Vec<usize>,
    /// `ŷ - y`, one row per predicted sample.
    pub errors: DMatrix<f64>,
}

/// Predicts every row from recorded regressors; the first σ rows have none.
pub fn validate_single_step(params: &ArxParams, ds: &Dataset) -> Result<SingleStepReport> {
    let s = params.sigma;
    check_dims(params, ds)?;
    if ds.len() <= s {
        return Err(Error::InsufficientData(format!("{} samples for σ = {s}", ds.len())));
    }
    let rows: Vec<usize> = (s..ds.len()).collect();
    let mut errors = DMatrix::zeros(rows.len(), params.n_outputs());
    for (r, &j) in rows.iter().enumerate() {
        let h = History::from_dataset(ds, j, s)?;
        let e = predict_one(params, &h) - ds.output(j);
        errors.row_mut(r).copy_from(&e.transpose());
    }
    Ok(SingleStepReport { stats: ErrorStats::from_errors(&errors), rows, errors })
}

fn check_dims(params: &ArxParams, ds: &Dataset) -> Result<()> {
    if ds.n_inputs() != params.n_inputs() || ds.n_outputs() != params.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} inputs / {} outputs, predictor {} / {}",
            ds.n_inputs(),
            ds.n_outputs(),
            params.n_inputs(),
            params.n_outputs()
        )));
    }
    Ok(())
}

/// Start rows (first predicted row) of `n_windows` windows of `horizon`
/// predictions, each preceded by σ history rows. Disjoint windows are used
/// when they fit, otherwise the starts are spread with a fixed stride.
pub fn window_starts(len: usize, sigma: usize, horizon: usize, n_windows: usize) -> Result<Vec<usize>> {
    if horizon == 0 || n_windows == 0 {
        return Err(Error::InvalidParameter("horizon and window count must be positive".into()));
    }
    let available = (len + 1).saturating_sub(horizon + sigma);
    if available < n_windows {
        return Err(Error::InsufficientData(format!(
            "{len} samples hold {available} windows of {horizon} + {sigma}, {n_windows} requested"
        )));
    }
    let stride = if n_windows == 1 {
        0
    } else if (n_windows - 1) * (horizon + sigma) < available {
        horizon + sigma
    } else {
        (available - 1) / (n_windows - 1)
    };
    Ok((0..n_windows).map(|w| sigma + w * stride).collect())
}

#[derive(Clone, Debug)]
pub struct HorizonProfile {
    /// `horizon x p` mean error per step.
    pub mean: DMatrix<f64>,
    /// `horizon x p` sample std per step.
    pub std: DMatrix<f64>,
    pub starts: Vec<usize>,
}

impl HorizonProfile {
    pub fn horizon(&self) -> usize {
        self.mean.nrows()
    }
}

/// Rolls the predictor out from every window start against the recorded
/// inputs and aggregates the errors per horizon step.
pub fn horizon_error_profile(params: &ArxParams, ds: &Dataset, horizon: usize, n_windows: usize) -> Result<HorizonProfile> {
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    horizon_error_profile_with_jobs(params, ds, horizon, n_windows, jobs)
}

pub fn horizon_error_profile_with_jobs(
    params: &ArxParams,
    ds: &Dataset,
    horizon: usize,
    n_windows: usize,
    jobs: usize,
) -> Result<HorizonProfile> {
    check_dims(params, ds)?;
    let starts = window_starts(ds.len(), params.sigma, horizon, n_windows)?;
    let window_errors = |j: usize| -> Result<DMatrix<f64>> {
        let h0 = History::from_dataset(ds, j, params.sigma)?;
        let u = ds.inputs.rows(j, horizon).into_owned();
        Ok(rollout(params, &h0, &u) - ds.outputs.rows(j, horizon))
    };
    let jobs = jobs.clamp(1, starts.len());
    let chunk = starts.len().div_ceil(jobs);
    let errors: Vec<DMatrix<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&j| window_errors(j)).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("window worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let p = params.n_outputs();
    let mut mean = DMatrix::zeros(horizon, p);
    let mut std = DMatrix::zeros(horizon, p);
    let mut column = DMatrix::zeros(errors.len(), p);
    for s in 0..horizon {
        for (w, e) in errors.iter().enumerate() {
            column.row_mut(w).copy_from(&e.row(s));
        }
        let st = ErrorStats::from_errors(&column);
        for c in 0..p {
            mean[(s, c)] = st.mean[c];
            std[(s, c)] = st.std[c];
        }
    }
    Ok(HorizonProfile { mean, std, starts })
}

/// Column labels for the outputs.
/// Validation rows preceded by the last `sigma` training rows, so that the
/// first validation row already has a full history.
pub fn with_lead_in(train: &Dataset, val: &Dataset, sigma: usize) -> Result<Dataset> {
    if train.len() < sigma {
        return Err(Error::InsufficientData(format!("{} training rows for a lead-in of {sigma}", train.len())));
    }
    train.slice(train.len() - sigma, sigma).concat(val)
}

pub fn output_names(p: usize) -> Vec<String> {
    if p == crate::N_OUTPUTS {
        ["Tb", "Tw", "Tc"].iter().map(|s| s.to_string()).collect()
    } else {
        (0..p).map(|j| format!("y{j}")).collect()
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// One row per predicted sample: `row, t, e_Tb, e_Tw, e_Tc`.
pub fn write_single_step_errors(path: &Path, report: &SingleStepReport, dt: f64) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let names = output_names(report.errors.ncols());
    let mut header = vec!["row".to_string(), "t".to_string()];
    header.extend(names.iter().map(|n| format!("e_{n}")));
    w.write_record(&header)?;
    for (r, &j) in report.rows.iter().enumerate() {
        let mut rec = vec![j.to_string(), (j as f64 * dt).to_string()];
        rec.extend(report.errors.row(r).iter().map(|e| e.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `step, mean_Tb, std_Tb, mean_Tw, std_Tw, mean_Tc, std_Tc`, steps from 1.
pub fn write_horizon_profile(path: &Path, profile: &HorizonProfile) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string()];
    for n in output_names(profile.mean.ncols()) {
        header.push(format!("mean_{n}"));
        header.push(format!("std_{n}"));
    }
    w.write_record(&header)?;
    for s in 0..profile.horizon() {
        let mut rec = vec![(s + 1).to_string()];
        for c in 0..profile.mean.ncols() {
            rec.push(profile.mean[(s, c)].to_string());
            rec.push(profile.std[(s, c)].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
