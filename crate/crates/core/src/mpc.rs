//! Output-based MPC on top of the ARX predictor.
//!
//! At time `t_k` the decision vector is `(q_k, …, q_{k+N-1}, ε)`, where the
//! flows act on the predicted outputs `y(t_{k+1}), …, y(t_{k+N})` and `ε`
//! holds one slack per predicted output. Predictions are affine in the flows,
//! `y_N = Φ q_N + γ`, with `Φ` built from the impulse response of the ARX
//! model and `γ` the rollout with zero flow.
//!
//! Flows are configured in m³/h like everywhere else, but enter the QP in
//! m³/s so that the input weight `R` acts on SI units.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{return_temp_profile, Dataset, ReturnTempSettings};
use crate::plant::{Plant, PlantInput, PlantParams, PlantState};
use crate::predictor::{rollout, History};
use crate::qp::{solve_qp, CsrMatrix, Qp, QpSettings, QpSolver, QpStatus};
use crate::sysid::ArxParams;
use crate::{Error, Result, CELSIUS_OFFSET, N_INPUTS, N_OUTPUTS, SECONDS_PER_HOUR};

const TB: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpConfig {
    /// Prediction horizon, steps.
    pub horizon: usize,
    /// Soft output bounds `(T_b, T_w, T_c)`, K.
    pub y_upper: [f64; 3],
    pub y_lower: [f64; 3],
    /// Flow bounds, m³/h.
    pub q_bounds: (f64, f64),
    /// Tracking weight on `T_b`.
    pub q_weight: f64,
    /// Input weight, per (m³/s)².
    pub r_weight: f64,
    /// Slack penalty per K.
    pub w_weight: f64,
    pub qp: QpSettings,
}

impl Default for OcpConfig {
    fn default() -> Self {
        let c = |v: [f64; 3]| v.map(|t| t + CELSIUS_OFFSET);
        Self {
            horizon: 720,
            y_upper: c([30.0, 25.0, 11.7]),
            y_lower: c([0.0, 11.7, 0.0]),
            q_bounds: (-100.0, 100.0),
            q_weight: 1.0,
            r_weight: 0.01,
            w_weight: 1.0,
            qp: QpSettings {
                eps_abs: 1e-5,
                eps_rel: 1e-5,
                max_iter: 4000,
                check_interval: 10,
                polish: false,
                ..QpSettings::default()
            },
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if !(self.q_weight >= 0.0 && self.r_weight >= 0.0 && self.w_weight >= 0.0) {
            return Err(Error::InvalidParameter("weights must be non-negative".into()));
        }
        if !(self.q_bounds.0 < self.q_bounds.1) {
            return Err(Error::InvalidParameter(format!("empty flow bounds {:?}", self.q_bounds)));
        }
        if (0..N_OUTPUTS).any(|o| !(self.y_lower[o] <= self.y_upper[o])) {
            return Err(Error::InvalidParameter("output bounds must satisfy lower ≤ upper".into()));
        }
        Ok(())
    }
}

/// Stacked predictions `y_N = Φ q_N + γ` over `N` steps, rows ordered step
/// by step with the outputs of one step contiguous. `Φ` is per m³/h.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonProblem {
    pub phi: DMatrix<f64>,
    pub gamma: DVector<f64>,
    /// Setpoints; entries for `T_w` and `T_c` equal `gamma`.
    pub y_ref: DVector<f64>,
}

impl HorizonProblem {
    pub fn horizon(&self) -> usize {
        self.phi.ncols()
    }

    /// Sets the `T_b` setpoints for steps `1..=N`.
    pub fn with_setpoints(mut self, tb_ref: &[f64]) -> Result<Self> {
        let n = self.horizon();
        if tb_ref.len() < n {
            return Err(Error::InsufficientData(format!("{} setpoints for a horizon of {n}", tb_ref.len())));
        }
        for s in 0..n {
            self.y_ref[s * N_OUTPUTS + TB] = tb_ref[s];
        }
        Ok(self)
    }
}

/// Output deviations at steps `1..=n` caused by a unit flow (m³/h) at step 0.
pub fn impulse_response(params: &ArxParams, n: usize) -> Vec<DVector<f64>> {
    let mut centred = params.clone();
    centred.u_mean.fill(0.0);
    centred.y_mean.fill(0.0);
    let mut h = History::at_means(&centred);
    h.u[0][0] = 1.0;
    let y = rollout(&centred, &h, &DMatrix::zeros(n, params.n_inputs()));
    (0..n).map(|s| y.row(s).transpose()).collect()
}

fn phi_from_impulse(g: &[DVector<f64>], p: usize) -> DMatrix<f64> {
    let n = g.len();
    let mut phi = DMatrix::zeros(p * n, n);
    for s in 0..n {
        for j in 0..=s {
            for o in 0..p {
                phi[(s * p + o, j)] = g[s - j][o];
            }
        }
    }
    phi
}

fn check_mpc_inputs(params: &ArxParams, h: &History, tr_forecast: &[f64], n: usize) -> Result<()> {
    if params.n_inputs() != N_INPUTS || params.n_outputs() != N_OUTPUTS {
        return Err(Error::DimensionMismatch("the MPC needs a model with inputs (q, T_r) and outputs (T_b, T_w, T_c)".into()));
    }
    if h.order() != params.sigma {
        return Err(Error::DimensionMismatch(format!("history of length {} for σ = {}", h.order(), params.sigma)));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if tr_forecast.len() < n {
        return Err(Error::InsufficientData(format!("T_r forecast of {} steps for a horizon of {n}", tr_forecast.len())));
    }
    Ok(())
}

/// Zero-flow rollout. `h` holds the measurements at `t_k`:
/// `h.y[i] = y(t_{k-i})` and `h.u[i] = u(t_{k-1-i})`; `tr_forecast[s]` is
/// `T_r(t_{k+s})`.
fn free_response(params: &ArxParams, h: &History, tr_forecast: &[f64], n: usize) -> DVector<f64> {
    let mut h0 = h.clone();
    h0.u.pop();
    h0.u.insert(0, DVector::from_row_slice(&[0.0, tr_forecast[0]]));
    let u_future = DMatrix::from_fn(n, N_INPUTS, |s, j| if j == 0 { 0.0 } else { tr_forecast[(s + 1).min(n - 1)] });
    let y = rollout(params, &h0, &u_future);
    DVector::from_iterator(n * N_OUTPUTS, (0..n).flat_map(|s| (0..N_OUTPUTS).map(move |o| (s, o))).map(|(s, o)| y[(s, o)]))
}

pub fn condense(params: &ArxParams, h: &History, tr_forecast: &[f64], n: usize) -> Result<HorizonProblem> {
    check_mpc_inputs(params, h, tr_forecast, n)?;
    let phi = phi_from_impulse(&impulse_response(params, n), N_OUTPUTS);
    let gamma = free_response(params, h, tr_forecast, n);
    Ok(HorizonProblem { phi, y_ref: gamma.clone(), gamma })
}

/// Layout of the QP: `N` flows followed by `pN` slacks; rows are the flow box,
/// the softened upper bounds, the softened lower bounds and `ε ≥ 0`.
struct OcpStructure {
    n: usize,
    p: usize,
}

impl OcpStructure {
    fn n_vars(&self) -> usize {
        self.n + self.p * self.n
    }

    fn constraints(&self, phi_si: &DMatrix<f64>) -> CsrMatrix {
        let (n, p) = (self.n, self.p);
        let mut rows = Vec::with_capacity(n + 3 * p * n);
        for j in 0..n {
            rows.push(vec![(j, 1.0)]);
        }
        for sign in [-1.0, 1.0] {
            for i in 0..p * n {
                let s = i / p;
                let mut row: Vec<(usize, f64)> = (0..=s).map(|j| (j, phi_si[(i, j)])).filter(|e| e.1 != 0.0).collect();
                row.push((n + i, sign));
                rows.push(row);
            }
        }
        for i in 0..p * n {
            rows.push(vec![(n + i, 1.0)]);
        }
        CsrMatrix::from_rows(self.n_vars(), rows).expect("OCP layout")
    }

    fn hessian(&self, phi_si: &DMatrix<f64>, cfg: &OcpConfig) -> CsrMatrix {
        let n = self.n;
        let phi_b = tb_rows(phi_si, self.p);
        let mut hq = phi_b.transpose() * &phi_b * (2.0 * cfg.q_weight);
        for j in 0..n {
            hq[(j, j)] += 2.0 * cfg.r_weight;
        }
        let rows = (0..self.n_vars())
            .map(|i| if i < n { (0..n).map(|j| (j, hq[(i, j)])).filter(|e| e.1 != 0.0).collect() } else { Vec::new() })
            .collect();
        CsrMatrix::from_rows(self.n_vars(), rows).expect("OCP layout")
    }

    fn linear_cost(&self, phi_b_t: &DMatrix<f64>, hp: &HorizonProblem, cfg: &OcpConfig) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let resid = DVector::from_iterator(n, (0..n).map(|s| hp.gamma[s * p + TB] - hp.y_ref[s * p + TB]));
        let gq = phi_b_t * resid * (2.0 * cfg.q_weight);
        let mut g = gq.as_slice().to_vec();
        g.resize(self.n_vars(), cfg.w_weight);
        g
    }

    fn bounds(&self, gamma: &DVector<f64>, cfg: &OcpConfig) -> (Vec<f64>, Vec<f64>) {
        let (n, p) = (self.n, self.p);
        let inf = f64::INFINITY;
        let k = n + 3 * p * n;
        let mut lb = Vec::with_capacity(k);
        let mut ub = Vec::with_capacity(k);
        let (qlo, qhi) = (cfg.q_bounds.0 / SECONDS_PER_HOUR, cfg.q_bounds.1 / SECONDS_PER_HOUR);
        for _ in 0..n {
            lb.push(qlo);
            ub.push(qhi);
        }
        for i in 0..p * n {
            lb.push(-inf);
            ub.push(cfg.y_upper[i % p] - gamma[i]);
        }
        for i in 0..p * n {
            lb.push(cfg.y_lower[i % p] - gamma[i]);
            ub.push(inf);
        }
        for _ in 0..p * n {
            lb.push(0.0);
            ub.push(inf);
        }
        (lb, ub)
    }
}

fn tb_rows(phi: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = phi.ncols();
    DMatrix::from_fn(n, n, |s, j| phi[(s * p + TB, j)])
}

fn phi_per_si(phi: &DMatrix<f64>) -> DMatrix<f64> {
    phi * SECONDS_PER_HOUR
}

/// Eq. 11 as a QP in `(q [m³/s], ε)`.
pub fn build_ocp(hp: &HorizonProblem, cfg: &OcpConfig) -> Result<Qp> {
    cfg.validate()?;
    let n = hp.horizon();
    let p = N_OUTPUTS;
    if hp.phi.nrows() != p * n || hp.gamma.len() != p * n || hp.y_ref.len() != p * n {
        return Err(Error::DimensionMismatch("horizon problem blocks disagree".into()));
    }
    let st = OcpStructure { n, p };
    let phi_si = phi_per_si(&hp.phi);
    let g = st.linear_cost(&tb_rows(&phi_si, p).transpose(), hp, cfg);
    let (lb, ub) = st.bounds(&hp.gamma, cfg);
    Qp::from_sparse(st.hessian(&phi_si, cfg), g, st.constraints(&phi_si), lb, ub)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcOutput {
    /// First flow move, m³/h, clamped to the flow bounds.
    pub q: f64,
    pub status: QpStatus,
    /// False when the solver stopped at the iteration limit.
    pub converged: bool,
    pub iterations: usize,
    /// Wall time of the QP solve, s.
    pub solve_time: f64,
    pub eps_max: f64,
    /// Flow plan over the horizon, m³/h.
    pub q_plan: Vec<f64>,
}

fn output_from(sol: &crate::qp::QpSolution, n: usize, cfg: &OcpConfig, solve_time: f64) -> Result<MpcOutput> {
    if sol.status == QpStatus::PrimalInfeasible {
        return Err(Error::PrimalInfeasible);
    }
    let q_plan: Vec<f64> = sol.x[..n].iter().map(|q| q * SECONDS_PER_HOUR).collect();
    Ok(MpcOutput {
        q: q_plan[0].clamp(cfg.q_bounds.0, cfg.q_bounds.1),
        status: sol.status,
        converged: sol.status == QpStatus::Solved,
        iterations: sol.iterations,
        solve_time,
        eps_max: sol.x[n..].iter().fold(0.0_f64, |a, e| a.max(*e)),
        q_plan,
    })
}

/// One receding-horizon step from scratch: condense, build and solve.
pub fn mpc_step(params: &ArxParams, h: &History, tr_forecast: &[f64], tb_ref: &[f64], cfg: &OcpConfig) -> Result<MpcOutput> {
    let hp = condense(params, h, tr_forecast, cfg.horizon)?.with_setpoints(tb_ref)?;
    let qp = build_ocp(&hp, cfg)?;
    let start = Instant::now();
    let sol = solve_qp(&qp, &cfg.qp)?;
    output_from(&sol, cfg.horizon, cfg, start.elapsed().as_secs_f64())
}

/// Receding-horizon controller that builds `Φ` and the solver once and only
/// updates the linear cost and the bounds between steps.
pub struct MpcController {
    params: ArxParams,
    cfg: OcpConfig,
    phi: DMatrix<f64>,
    phi_b_t: DMatrix<f64>,
    solver: QpSolver,
    last: Option<crate::qp::QpSolution>,
}

impl MpcController {
    pub fn new(params: ArxParams, cfg: OcpConfig) -> Result<Self> {
        cfg.validate()?;
        if params.n_inputs() != N_INPUTS || params.n_outputs() != N_OUTPUTS {
            return Err(Error::DimensionMismatch("the MPC needs a model with inputs (q, T_r) and outputs (T_b, T_w, T_c)".into()));
        }
        let n = cfg.horizon;
        let phi = phi_from_impulse(&impulse_response(&params, n), N_OUTPUTS);
        let gamma = DVector::from_fn(N_OUTPUTS * n, |i, _| params.y_mean[i % N_OUTPUTS]);
        let hp = HorizonProblem { phi: phi.clone(), y_ref: gamma.clone(), gamma };
        let qp = build_ocp(&hp, &cfg)?;
        let solver = QpSolver::new(&qp, cfg.qp.clone())?;
        let phi_b_t = tb_rows(&phi_per_si(&phi), N_OUTPUTS).transpose();
        Ok(Self { params, cfg, phi, phi_b_t, solver, last: None })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ArxParams {
        &self.params
    }

    /// Same contract as [`mpc_step`].
    pub fn step(&mut self, h: &History, tr_forecast: &[f64], tb_ref: &[f64]) -> Result<MpcOutput> {
        let n = self.cfg.horizon;
        check_mpc_inputs(&self.params, h, tr_forecast, n)?;
        let gamma = free_response(&self.params, h, tr_forecast, n);
        let hp = HorizonProblem { phi: DMatrix::zeros(0, n), y_ref: gamma.clone(), gamma }.with_setpoints(tb_ref)?;
        let st = OcpStructure { n, p: N_OUTPUTS };
        let g = st.linear_cost(&self.phi_b_t, &hp, &self.cfg);
        let (lb, ub) = st.bounds(&hp.gamma, &self.cfg);
        let start = Instant::now();
        self.solver.update_linear_cost(&g)?;
        self.solver.update_bounds(&lb, &ub)?;
        if let Some(prev) = &self.last {
            let (x, z) = shifted(prev, n, N_OUTPUTS);
            self.solver.warm_start(&x, Some(&z))?;
        }
        let sol = self.solver.solve()?;
        let out = output_from(&sol, n, &self.cfg, start.elapsed().as_secs_f64())?;
        self.last = Some(sol);
        Ok(out)
    }

    /// Predictions `Φ q + γ` for a flow plan in m³/h.
    pub fn predict(&self, h: &History, tr_forecast: &[f64], q_plan: &[f64]) -> Result<DVector<f64>> {
        let n = self.cfg.horizon;
        check_mpc_inputs(&self.params, h, tr_forecast, n)?;
        Ok(&self.phi * DVector::from_column_slice(&q_plan[..n]) + free_response(&self.params, h, tr_forecast, n))
    }
}

/// Previous solution advanced by one step, last step repeated.
fn shifted(sol: &crate::qp::QpSolution, n: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let shift = |v: &[f64], width: usize| -> Vec<f64> {
        let mut out = v[width..].to_vec();
        out.extend_from_slice(&v[v.len() - width..]);
        out
    };
    let mut x = shift(&sol.x[..n], 1);
    x.extend(shift(&sol.x[n..], p));
    let k = sol.z.len();
    let mut z = shift(&sol.z[..n], 1);
    let mut off = n;
    while off < k {
        z.extend(shift(&sol.z[off..off + p * n], p));
        off += p * n;
    }
    (x, z)
}

/// Heat delivered to the building loop, W.
pub fn delivered_power(t_b: f64, t_r: f64, params: &PlantParams) -> f64 {
    params.building_capacity_rate() * (t_b - t_r)
}

/// `T_b` setpoint that delivers `demand` W at return temperature `t_r`.
pub fn setpoint_for_demand(demand: f64, t_r: f64, params: &PlantParams) -> f64 {
    t_r + demand / params.building_capacity_rate()
}

/// Periodic heat demand, linearly interpolated between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile {
    times: Vec<f64>,
    power: Vec<f64>,
    period: f64,
}

impl DemandProfile {
    /// `times` in s, strictly increasing and starting at 0; the profile
    /// repeats with `period`.
    pub fn new(times: Vec<f64>, power: Vec<f64>, period: f64) -> Result<Self> {
        if times.is_empty() || times.len() != power.len() {
            return Err(Error::InvalidParameter("demand profile needs matching, non-empty columns".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) || !(period > *times.last().unwrap()) {
            return Err(Error::InvalidParameter("demand times must increase from 0 and end before the period".into()));
        }
        if power.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("demand profile"));
        }
        Ok(Self { times, power, period })
    }

    /// Winter heating day: night base load with morning and evening peaks.
    pub fn heating_day() -> Self {
        let hours = [0.0, 5.0, 7.0, 9.0, 12.0, 16.0, 18.0, 21.0, 23.0];
        let kw = [120.0, 130.0, 260.0, 200.0, 170.0, 190.0, 250.0, 180.0, 130.0];
        Self::new(hours.iter().map(|h| h * 3600.0).collect(), kw.iter().map(|p| p * 1e3).collect(), 86_400.0)
            .expect("valid profile")
    }

    pub fn constant(power: f64) -> Self {
        Self { times: vec![0.0], power: vec![power], period: 1.0 }
    }

    /// Reads `t_s,demand_W` rows; the period is one day.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut times = Vec::new();
        let mut power = Vec::new();
        for rec in csv::Reader::from_path(path)?.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Format(format!("{}: short row", path.display())))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
            };
            times.push(parse(0)?);
            power.push(parse(1)?);
        }
        Self::new(times, power, 86_400.0)
    }

    pub fn at(&self, t: f64) -> f64 {
        let t = t.rem_euclid(self.period);
        let i = self.times.partition_point(|x| *x <= t) - 1;
        let (t0, p0) = (self.times[i], self.power[i]);
        let (t1, p1) = if i + 1 < self.times.len() { (self.times[i + 1], self.power[i + 1]) } else { (self.period, self.power[0]) };
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: f64,
    #[serde(rename = "T_r")]
    pub t_r: f64,
    #[serde(rename = "T_b")]
    pub t_b: f64,
    #[serde(rename = "T_w")]
    pub t_w: f64,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    #[serde(rename = "T_b_ref")]
    pub t_b_ref: f64,
    #[serde(rename = "demand_W")]
    pub demand: f64,
    #[serde(rename = "delivered_W")]
    pub delivered: f64,
    pub solve_ms: f64,
    pub eps_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
    /// Steps that ended at the iteration limit.
    pub unconverged: usize,
    /// QP iterations per step.
    pub iterations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedLoopSummary {
    pub steps: usize,
    pub mean_solve_s: f64,
    pub max_solve_s: f64,
    /// Share of steps after the transient with delivered ≥ demand, %.
    pub demand_satisfaction_pct: f64,
    pub max_slack: f64,
    pub unconverged_steps: usize,
}

impl TrajectoryLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Satisfaction is counted from `transient_steps` on.
    pub fn summary(&self, transient_steps: usize) -> ClosedLoopSummary {
        let n = self.rows.len();
        let solve: Vec<f64> = self.rows.iter().map(|r| r.solve_ms / 1e3).collect();
        let tail = &self.rows[transient_steps.min(n)..];
        let met = tail.iter().filter(|r| r.delivered >= r.demand).count();
        ClosedLoopSummary {
            steps: n,
            mean_solve_s: if n > 0 { solve.iter().sum::<f64>() / n as f64 } else { 0.0 },
            max_solve_s: solve.iter().fold(0.0, |a, b| a.max(*b)),
            demand_satisfaction_pct: if tail.is_empty() { 0.0 } else { 100.0 * met as f64 / tail.len() as f64 },
            max_slack: self.rows.iter().fold(0.0, |a, r| a.max(r.eps_max)),
            unconverged_steps: self.unconverged,
        }
    }
}

/// Exogenous data of a closed-loop run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub initial_state: PlantState,
    /// Measurements up to `t_0` (see [`condense`]); stationary at the initial
    /// outputs with zero flow when absent.
    pub history: Option<History>,
    /// `T_r(t_k)` for at least `steps + N` steps, K.
    pub t_r: Vec<f64>,
    pub demand: DemandProfile,
    pub steps: usize,
}

impl Scenario {
    /// Continues a recorded run: `state` is the plant state at the last row
    /// of `recent`, and the measured history is read from the rows before it.
    pub fn continuing(
        state: PlantState,
        recent: &Dataset,
        sigma: usize,
        t_r: Vec<f64>,
        demand: DemandProfile,
        steps: usize,
    ) -> Result<Self> {
        let n = recent.len();
        if sigma == 0 || n < sigma + 1 {
            return Err(Error::InsufficientData(format!("{n} recorded rows, need {}", sigma + 1)));
        }
        let j = n - 1;
        let history = History::new((0..sigma).map(|i| recent.output(j - i)).collect(), (0..sigma).map(|i| recent.input(j - 1 - i)).collect())?;
        Ok(Self { initial_state: state, history: Some(history), t_r, demand, steps })
    }
}

/// Return temperatures of the heating scenario: a 4-8 °C band with a slow
/// random walk.
pub fn heating_return_temp() -> ReturnTempSettings {
    ReturnTempSettings { band: (277.15, 281.15), daily_fraction: 0.3, walk_std: 0.02, walk_fraction: 0.6 }
}

const SCENARIO_SEED_OFFSET: u64 = 1000;

/// `T_r` profile of a closed-loop scenario, drawn from a stream separate from
/// the one used for the recorded data of the same seed.
pub fn scenario_return_temp(n_steps: usize, seed: u64, dt: f64, settings: &ReturnTempSettings) -> Result<Vec<f64>> {
    return_temp_profile(n_steps, seed.wrapping_add(SCENARIO_SEED_OFFSET), dt, settings)
}

/// Runs the controller against the noise-free plant.
pub fn closed_loop(plant: &Plant, params: &ArxParams, cfg: &OcpConfig, scenario: &Scenario) -> Result<TrajectoryLog> {
    let mut ctrl = MpcController::new(params.clone(), cfg.clone())?;
    closed_loop_with(plant, &mut ctrl, scenario)
}

pub fn closed_loop_with(plant: &Plant, ctrl: &mut MpcController, scenario: &Scenario) -> Result<TrajectoryLog> {
    let plant = plant.noise_free();
    let pp = plant.params().clone();
    let n = ctrl.config().horizon;
    let steps = scenario.steps;
    if scenario.t_r.len() < steps + n {
        return Err(Error::InsufficientData(format!("T_r profile of {} steps for {steps} + {n}", scenario.t_r.len())));
    }
    let sigma = ctrl.params().sigma;
    let mut state = scenario.initial_state.clone();
    let y0 = DVector::from_row_slice(&state.output());
    let mut hist = match &scenario.history {
        Some(h) if h.order() == sigma => h.clone(),
        Some(h) => return Err(Error::DimensionMismatch(format!("history of length {} for σ = {sigma}", h.order()))),
        None => History::new(vec![y0; sigma], vec![DVector::from_row_slice(&[0.0, scenario.t_r[0]]); sigma])?,
    };
    let setpoint = |k: usize| setpoint_for_demand(scenario.demand.at(k as f64 * pp.dt), scenario.t_r[k], &pp);
    let mut log = TrajectoryLog::default();
    for k in 0..steps {
        let forecast = &scenario.t_r[k..k + n];
        let refs: Vec<f64> = (1..=n).map(|s| setpoint(k + s)).collect();
        let out = ctrl.step(&hist, forecast, &refs)?;
        if !out.converged {
            log.unconverged += 1;
        }
        log.iterations.push(out.iterations);
        let y = state.output();
        let t_r = scenario.t_r[k];
        let demand = scenario.demand.at(k as f64 * pp.dt);
        log.rows.push(TrajectoryRow {
            t: k as f64 * pp.dt,
            q: out.q,
            t_r,
            t_b: y[0],
            t_w: y[1],
            t_c: y[2],
            t_b_ref: setpoint(k),
            demand,
            delivered: delivered_power(y[0], t_r, &pp),
            solve_ms: out.solve_time * 1e3,
            eps_max: out.eps_max,
        });
        let q = out.q.clamp(pp.q_min, pp.q_max);
        state = plant.step::<rand_chacha::ChaCha8Rng>(&state, PlantInput { q, t_r }, None)?.state;
        hist.shift(DVector::from_row_slice(&[q, t_r]), DVector::from_row_slice(&state.output()));
    }
    Ok(log)
}
