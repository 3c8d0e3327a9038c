//! Excitation signals, dataset simulation and dataset persistence.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::plant::{mode_of, OperatingMode, Plant, PlantInput, PlantParams, PlantState};
use crate::{Error, Result, N_INPUTS, N_OUTPUTS};

const CSV_HEADER: [&str; 6] = ["t", "q", "T_r", "T_b", "T_w", "T_c"];
const SECONDS_PER_DAY: f64 = 86_400.0;

// independent generator streams derived from one dataset seed
const STREAM_FLOW: u64 = 0x9e37_79b9_7f4a_7c15;
const STREAM_RETURN: u64 = 0xbf58_476d_1ce4_e5b9;
const STREAM_NOISE: u64 = 0x94d0_49bb_1331_11eb;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

/// Time-indexed input/output records. Row `k` holds the input applied at
/// `t_k` and the output measured at `t_k` (before that input acts).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    /// `N x 2`: flow in m³/h, return temperature in K.
    pub inputs: DMatrix<f64>,
    /// `N x 3`: `T_b`, `T_w(r0)`, `T_c(r0)` in K.
    pub outputs: DMatrix<f64>,
    pub seed: u64,
    pub split: Split,
}

impl Dataset {
    pub fn new(dt: f64, inputs: DMatrix<f64>, outputs: DMatrix<f64>, seed: u64, split: Split) -> Result<Self> {
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} output rows",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        Ok(Self { dt, inputs, outputs, seed, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn input(&self, k: usize) -> DVector<f64> {
        self.inputs.row(k).transpose()
    }

    pub fn output(&self, k: usize) -> DVector<f64> {
        self.outputs.row(k).transpose()
    }

    /// Rows `range` as a new dataset with the same metadata.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            dt: self.dt,
            inputs: self.inputs.rows(start, len).into_owned(),
            outputs: self.outputs.rows(start, len).into_owned(),
            seed: self.seed,
            split: self.split,
        }
    }

    /// Appends `other` below `self`; metadata is taken from `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_inputs() != other.n_inputs() || self.n_outputs() != other.n_outputs() {
            return Err(Error::DimensionMismatch("datasets have different channel counts".into()));
        }
        let n = self.len() + other.len();
        let inputs = DMatrix::from_fn(n, self.n_inputs(), |i, j| {
            if i < self.len() { self.inputs[(i, j)] } else { other.inputs[(i - self.len(), j)] }
        });
        let outputs = DMatrix::from_fn(n, self.n_outputs(), |i, j| {
            if i < self.len() { self.outputs[(i, j)] } else { other.outputs[(i - self.len(), j)] }
        });
        Dataset::new(other.dt, inputs, outputs, other.seed, other.split)
    }

    /// Column means of inputs and outputs.
    pub fn means(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.len().max(1) as f64;
        let u = DVector::from_fn(self.n_inputs(), |j, _| self.inputs.column(j).sum() / n);
        let y = DVector::from_fn(self.n_outputs(), |j, _| self.outputs.column(j).sum() / n);
        (u, y)
    }

    /// Copy with the given means subtracted from every row.
    pub fn centered(&self, u_mean: &DVector<f64>, y_mean: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for mut row in out.inputs.row_iter_mut() {
            row -= u_mean.transpose();
        }
        for mut row in out.outputs.row_iter_mut() {
            row -= y_mean.transpose();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSettings {
    /// Minimum and maximum hold length in steps.
    pub hold_min: usize,
    pub hold_max: usize,
    /// Flow levels, m³/h.
    pub levels: Vec<f64>,
}

impl Default for ExcitationSettings {
    fn default() -> Self {
        Self { hold_min: 1, hold_max: 10, levels: (-4..=4).map(|i| 25.0 * i as f64).collect() }
    }
}

/// Multilevel piecewise-constant pseudo-random flow sequence.
///
/// Hold lengths are uniform in `[hold_min, hold_max]` steps and levels are
/// drawn uniformly from `settings.levels`, clamped to `bounds`.
pub fn excitation_flow(n_steps: usize, seed: u64, bounds: (f64, f64), settings: &ExcitationSettings) -> Result<Vec<f64>> {
    if settings.levels.is_empty() || settings.hold_min == 0 || settings.hold_min > settings.hold_max {
        return Err(Error::InvalidParameter("excitation needs levels and 1 <= hold_min <= hold_max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STREAM_FLOW);
    let mut out = Vec::with_capacity(n_steps);
    while out.len() < n_steps {
        let level = settings.levels[rng.random_range(0..settings.levels.len())].clamp(bounds.0, bounds.1);
        let hold = rng.random_range(settings.hold_min..=settings.hold_max);
        let take = hold.min(n_steps - out.len());
        out.extend(std::iter::repeat_n(level, take));
    }
    Ok(out)
}

fn covers_all_modes(flow: &[f64]) -> bool {
    let mut seen = [false; 3];
    for &q in flow {
        seen[match mode_of(q) {
            OperatingMode::Heating => 0,
            OperatingMode::Storing => 1,
            OperatingMode::Cooling => 2,
        }] = true;
    }
    seen.iter().all(|s| *s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnTempSettings {
    /// Admissible band `[low, high]`, K.
    pub band: (f64, f64),
    /// Amplitude of the daily sinusoid as a fraction of the half band.
    pub daily_fraction: f64,
    /// Random-walk increment standard deviation, K per step.
    pub walk_std: f64,
    /// Random-walk excursion limit as a fraction of the half band.
    pub walk_fraction: f64,
}

impl Default for ReturnTempSettings {
    fn default() -> Self {
        Self { band: (276.15, 291.15), daily_fraction: 0.3, walk_std: 0.1, walk_fraction: 0.6 }
    }
}

/// Daily sinusoid plus a reflected random walk around the band centre,
/// clipped to the band.
pub fn return_temp_profile(n_steps: usize, seed: u64, dt: f64, settings: &ReturnTempSettings) -> Result<Vec<f64>> {
    let (lo, hi) = settings.band;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!("return temperature band [{lo}, {hi}] is empty")));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if half == 0.0 {
        return Ok(vec![mid; n_steps]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STREAM_RETURN);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let step = Normal::new(0.0, settings.walk_std.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let limit = settings.walk_fraction * half;
    let amp = settings.daily_fraction * half;
    let mut walk = 0.0_f64;
    Ok((0..n_steps)
        .map(|k| {
            let t = k as f64 * dt;
            let value = mid + amp * (std::f64::consts::TAU * t / SECONDS_PER_DAY + phase).sin() + walk;
            walk += step.sample(&mut rng);
            if walk > limit {
                walk = 2.0 * limit - walk;
            } else if walk < -limit {
                walk = -2.0 * limit - walk;
            }
            value.clamp(lo, hi)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataGenSettings {
    #[serde(default)]
    pub excitation: ExcitationSettings,
    #[serde(default)]
    pub return_temp: ReturnTempSettings,
    /// Peak over-/under-temperature of the warm/cold aquifer at start, K.
    pub initial_charge: f64,
    /// Radial width of the initial charge, m.
    pub charge_width: f64,
}

impl Default for DataGenSettings {
    fn default() -> Self {
        Self {
            excitation: ExcitationSettings::default(),
            return_temp: ReturnTempSettings::default(),
            initial_charge: 7.5,
            charge_width: 1.8,
        }
    }
}

/// Simulates one contiguous run of `n_train + n_val` steps and splits it.
///
/// Inputs are recorded as commanded; noise only enters through the plant.
/// If the training part of the excitation misses one of the three modes,
/// the flow seed is advanced until it covers all of them.
pub fn simulate_dataset(
    params: &PlantParams,
    n_train: usize,
    n_val: usize,
    seed: u64,
    settings: &DataGenSettings,
) -> Result<(Dataset, Dataset)> {
    let rec = simulate_recording(params, n_train, n_val, seed, settings)?;
    Ok((rec.train, rec.val))
}

/// Output of one data-generation run.
#[derive(Clone, Debug)]
pub struct Recording {
    pub train: Dataset,
    pub val: Dataset,
    /// Plant state at the last recorded row, before its input is applied.
    pub final_state: PlantState,
}

pub fn simulate_recording(
    params: &PlantParams,
    n_train: usize,
    n_val: usize,
    seed: u64,
    settings: &DataGenSettings,
) -> Result<Recording> {
    let plant = Plant::new(params.clone())?;
    let n = n_train + n_val;
    if n_train == 0 {
        return Err(Error::InvalidParameter("training set must not be empty".into()));
    }
    let bounds = (params.q_min, params.q_max);
    let mut flow_seed = seed;
    let mut flow = excitation_flow(n, flow_seed, bounds, &settings.excitation)?;
    for _ in 0..64 {
        if covers_all_modes(&flow[..n_train]) {
            break;
        }
        flow_seed = flow_seed.wrapping_add(0x1000_0000_01b3);
        flow = excitation_flow(n, flow_seed, bounds, &settings.excitation)?;
    }
    let t_r = return_temp_profile(n, seed, params.dt, &settings.return_temp)?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ STREAM_NOISE);
    let mut state = plant.charged_state(settings.initial_charge, settings.charge_width, t_r[0]);
    let mut inputs = DMatrix::zeros(n, N_INPUTS);
    let mut outputs = DMatrix::zeros(n, N_OUTPUTS);
    for k in 0..n {
        let y = state.output();
        inputs[(k, 0)] = flow[k];
        inputs[(k, 1)] = t_r[k];
        for (j, v) in y.iter().enumerate() {
            outputs[(k, j)] = *v;
        }
        if k + 1 < n {
            state = plant.step(&state, PlantInput { q: flow[k], t_r: t_r[k] }, Some(&mut noise_rng))?.state;
        }
    }
    let full = Dataset::new(params.dt, inputs, outputs, seed, Split::Train)?;
    let train = full.slice(0, n_train);
    let mut val = full.slice(n_train, n_val);
    val.split = Split::Validation;
    Ok(Recording { train, val, final_state: state })
}

/// Metadata stored next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub dt: f64,
    pub seed: u64,
    pub split: Split,
    pub rows: usize,
    pub config_hash: String,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `t,q,T_r,T_b,T_w,T_c` rows plus the JSON sidecar.
pub fn write_dataset(csv_path: &Path, ds: &Dataset, config_hash: &str) -> Result<()> {
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(CSV_HEADER)?;
    for k in 0..ds.len() {
        let t = k as f64 * ds.dt;
        let row = [t, ds.inputs[(k, 0)], ds.inputs[(k, 1)], ds.outputs[(k, 0)], ds.outputs[(k, 1)], ds.outputs[(k, 2)]];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    let sidecar = DatasetSidecar { dt: ds.dt, seed: ds.seed, split: ds.split, rows: ds.len(), config_hash: config_hash.to_owned() };
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a dataset CSV and its sidecar.
pub fn read_dataset(csv_path: &Path) -> Result<(Dataset, DatasetSidecar)> {
    let sidecar: DatasetSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let mut r = csv::Reader::from_path(csv_path)?;
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected header {:?} in {}", header, csv_path.display())));
    }
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
        if vals.len() != CSV_HEADER.len() || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("row {} is malformed", i + 1)));
        }
        u.extend_from_slice(&vals[1..3]);
        y.extend_from_slice(&vals[3..6]);
    }
    let n = u.len() / N_INPUTS;
    if n != sidecar.rows {
        return Err(Error::Format(format!("sidecar announces {} rows, CSV has {n}", sidecar.rows)));
    }
    let ds = Dataset::new(
        sidecar.dt,
        DMatrix::from_row_slice(n, N_INPUTS, &u),
        DMatrix::from_row_slice(n, N_OUTPUTS, &y),
        sidecar.seed,
        sidecar.split,
    )?;
    Ok((ds, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excitation_single_step_and_determinism() {
        let s = ExcitationSettings::default();
        let one = excitation_flow(1, 3, (-100.0, 100.0), &s).unwrap();
        assert_eq!(one.len(), 1);
        assert!(s.levels.contains(&one[0]));
        let a = excitation_flow(500, 11, (-100.0, 100.0), &s).unwrap();
        let b = excitation_flow(500, 11, (-100.0, 100.0), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn excitation_holds_within_limits() {
        let s = ExcitationSettings { hold_min: 10, hold_max: 120, ..ExcitationSettings::default() };
        let q = excitation_flow(5000, 5, (-100.0, 100.0), &s).unwrap();
        // interior runs (not the truncated last one) respect the hold range;
        // equal consecutive levels merge, so only the lower bound is exact
        let mut runs = Vec::new();
        let mut len = 1;
        for w in q.windows(2) {
            if w[0] == w[1] {
                len += 1;
            } else {
                runs.push(len);
                len = 1;
            }
        }
        assert!(runs.iter().all(|&r| r >= s.hold_min));
    }

    #[test]
    fn default_flow_correlation_decays_within_fifty_shifts() {
        let q = excitation_flow(2900, 3, (-100.0, 100.0), &ExcitationSettings::default()).unwrap();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let c: Vec<f64> = q.iter().map(|v| v - mean).collect();
        let r0 = crate::sysid::xcorr(&c, &c, 0).unwrap();
        for k in 51..=60 {
            assert!(crate::sysid::xcorr(&c, &c, k).unwrap().abs() < 0.1 * r0);
        }
    }

    #[test]
    fn excitation_covers_modes_on_training_length() {
        let p = PlantParams::reference(1);
        let s = DataGenSettings::default();
        let (train, _) = simulate_dataset(&p, 2900, 10, 42, &s).unwrap();
        let q: Vec<f64> = train.inputs.column(0).iter().copied().collect();
        assert!(covers_all_modes(&q));
    }

    #[test]
    fn return_temperature_band_and_determinism() {
        let s = ReturnTempSettings::default();
        let t = return_temp_profile(5000, 9, 60.0, &s).unwrap();
        assert!(t.iter().all(|v| (276.15..=291.15).contains(v)));
        assert_eq!(t, return_temp_profile(5000, 9, 60.0, &s).unwrap());
        let flat = ReturnTempSettings { band: (280.0, 280.0), ..s.clone() };
        assert!(return_temp_profile(100, 9, 60.0, &flat).unwrap().iter().all(|v| *v == 280.0));
        let empty = ReturnTempSettings { band: (281.0, 280.0), ..s };
        assert!(return_temp_profile(10, 9, 60.0, &empty).is_err());
    }

    #[test]
    fn dataset_sizes_and_reproducibility() {
        let mut p = PlantParams::reference(2);
        let s = DataGenSettings::default();
        let (train, val) = simulate_dataset(&p, 2900, 820, 5, &s).unwrap();
        assert_eq!(train.len(), 2900);
        assert_eq!(val.len(), 820);
        assert_eq!(val.split, Split::Validation);
        assert!(train.inputs.column(0).iter().all(|q| (-100.0..=100.0).contains(q)));

        p.noise_std = 0.0;
        let (a, _) = simulate_dataset(&p, 300, 10, 5, &s).unwrap();
        let (b, _) = simulate_dataset(&p, 300, 10, 5, &s).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn warm_aquifer_runs_warmer_than_cold() {
        let p = PlantParams::reference(4);
        let (train, _) = simulate_dataset(&p, 2900, 820, 8, &DataGenSettings::default()).unwrap();
        let (_, y_mean) = train.means();
        assert!(y_mean[1] > y_mean[2], "warm {} vs cold {}", y_mean[1], y_mean[2]);
    }

    #[test]
    fn csv_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/train.csv");
        let p = PlantParams::reference(2);
        let (train, _) = simulate_dataset(&p, 50, 5, 1, &DataGenSettings::default()).unwrap();
        write_dataset(&path, &train, "abc").unwrap();
        let (back, side) = read_dataset(&path).unwrap();
        assert_eq!(back, train);
        assert_eq!(side.config_hash, "abc");

        let text = fs::read_to_string(&path).unwrap().replacen("\n0,", "\nfoo,", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
    }
}
