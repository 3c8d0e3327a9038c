use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ates_core::datagen::{read_dataset, simulate_recording, write_dataset, Dataset};
use ates_core::mpc::{closed_loop, scenario_return_temp, DemandProfile, Scenario};
use ates_core::plant::{Plant, PlantState};
use ates_core::predictor::{self, ErrorStats, HorizonProfile};
use ates_core::sysid::{self, ArxParams, Method};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts;
use crate::config::{sha256_hex, WorkbenchConfig};
use crate::{CliError, Mode};

pub const TRAIN_CSV: &str = "data/train.csv";
pub const VAL_CSV: &str = "data/val.csv";
pub const FINAL_STATE: &str = "data/final_state.json";
pub const TRAJECTORY_CSV: &str = "mpc/trajectory.csv";
pub const MPC_REPORT: &str = "mpc/report.json";

pub fn params_file(method: Method) -> String {
    format!("params/arx_{}.json", method.to_string().to_lowercase())
}

fn sidecar(file: &str) -> String {
    file.replace(".csv", ".json")
}

/// Plant state at the end of the recording, the starting point of the
/// closed loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalState {
    pub config_hash: String,
    pub seed: u64,
    pub state: PlantState,
}

fn need(dir: &Path, file: &str, producer: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(file);
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Data(format!("{} is missing; run `ates {producer}` first", p.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).expect("artifact serialises"))?;
    Ok(())
}

pub fn simulate(cfg: &WorkbenchConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let rec = simulate_recording(&cfg.plant_params(), cfg.data.n_train, cfg.data.n_val, cfg.seed, &cfg.data.generation)?;
    write_dataset(&dir.join(TRAIN_CSV), &rec.train, &hash)?;
    write_dataset(&dir.join(VAL_CSV), &rec.val, &hash)?;
    write_json(&dir.join(FINAL_STATE), &FinalState { config_hash: hash, seed: cfg.seed, state: rec.final_state })?;
    artifacts::record(cfg, "simulate", &[TRAIN_CSV, &sidecar(TRAIN_CSV), VAL_CSV, &sidecar(VAL_CSV), FINAL_STATE])?;
    println!("wrote {} training and {} validation rows to {}", rec.train.len(), rec.val.len(), dir.join("data").display());
    Ok(())
}

fn load_train(cfg: &WorkbenchConfig) -> Result<(Dataset, String), CliError> {
    let path = need(&cfg.output_dir, TRAIN_CSV, "simulate")?;
    let (ds, _) = read_dataset(&path)?;
    Ok((ds, sha256_hex(&fs::read(&path)?)))
}

pub fn identify(cfg: &WorkbenchConfig) -> Result<(), CliError> {
    let (train, train_hash) = load_train(cfg)?;
    let id = &cfg.identification;
    let params = sysid::identify(&train, id.sigma, id.method, Some(id.p_max))?;
    let provenance = json!({
        "method": id.method,
        "sigma": id.sigma,
        "p_max": id.p_max,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "train_sha256": train_hash,
        "spectral_radius": params.spectral_radius(),
    });
    let file = params_file(id.method);
    params.save(&cfg.output_dir.join(&file), Some(provenance))?;
    artifacts::record(cfg, "identify", &[&file])?;
    println!(
        "{} predictor with sigma = {}, spectral radius {:.4}, written to {}",
        id.method,
        id.sigma,
        params.spectral_radius(),
        cfg.output_dir.join(&file).display()
    );
    Ok(())
}

fn load_params(cfg: &WorkbenchConfig) -> Result<ArxParams, CliError> {
    let path = need(&cfg.output_dir, &params_file(cfg.identification.method), "identify")?;
    Ok(ArxParams::load(&path)?.0)
}

fn load_val(cfg: &WorkbenchConfig) -> Result<Dataset, CliError> {
    Ok(read_dataset(&need(&cfg.output_dir, VAL_CSV, "simulate")?)?.0)
}

pub fn stats_table(stats: &ErrorStats) -> String {
    let names = ["T_b", "T_w", "T_c"];
    let mut out = format!("{:<6}{:>12}{:>12}{:>12}\n", "", "Mean [K]", "STD [K]", "MAE [K]");
    for (j, name) in names.iter().enumerate().take(stats.mean.len()) {
        out.push_str(&format!("{:<6}{:>12.4}{:>12.4}{:>12.4}\n", name, stats.mean[j], stats.std[j], stats.mae[j]));
    }
    out
}

fn profile_summary(profile: &HorizonProfile) -> serde_json::Value {
    let n = profile.horizon();
    let p = profile.mean.ncols();
    let std_ratio: Vec<f64> = (0..p)
        .map(|o| {
            let col = profile.std.column(o);
            let (lo, hi) = col.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
            if hi > 0.0 {
                (hi - lo) / hi
            } else {
                0.0
            }
        })
        .collect();
    json!({
        "horizon": n,
        "windows": profile.starts.len(),
        "mean_at_end": (0..p).map(|o| profile.mean[(n - 1, o)]).collect::<Vec<_>>(),
        "std_at_end": (0..p).map(|o| profile.std[(n - 1, o)]).collect::<Vec<_>>(),
        "std_relative_variation": std_ratio,
    })
}

pub fn validate(cfg: &WorkbenchConfig, mode: Mode, jobs: usize) -> Result<(), CliError> {
    let params = load_params(cfg)?;
    let val = load_val(cfg)?;
    let tag = cfg.identification.method.to_string().to_lowercase();
    let dir = &cfg.output_dir;
    match mode {
        Mode::Single => {
            let report = predictor::validate_single_step(&params, &val)?;
            let csv = format!("validation/single_{tag}.csv");
            let summary = format!("validation/single_{tag}.json");
            predictor::write_single_step_errors(&dir.join(&csv), &report, val.dt)?;
            write_json(
                &dir.join(&summary),
                &json!({ "config_hash": cfg.hash(), "seed": cfg.seed, "method": cfg.identification.method, "stats": report.stats }),
            )?;
            artifacts::record(cfg, "validate single", &[&csv, &summary])?;
            println!("single-step errors over {} predictions ({})", report.stats.count, cfg.identification.method);
            print!("{}", stats_table(&report.stats));
        }
        Mode::Multi => {
            let (train, _) = load_train(cfg)?;
            let ds = predictor::with_lead_in(&train, &val, params.sigma)?;
            let v = &cfg.validation;
            let profile = predictor::horizon_error_profile_with_jobs(&params, &ds, v.horizon, v.n_windows, jobs)?;
            let csv = format!("validation/multi_{tag}.csv");
            let summary = format!("validation/multi_{tag}.json");
            predictor::write_horizon_profile(&dir.join(&csv), &profile)?;
            let mut s = profile_summary(&profile);
            s["config_hash"] = json!(cfg.hash());
            s["seed"] = json!(cfg.seed);
            s["method"] = json!(cfg.identification.method);
            write_json(&dir.join(&summary), &s)?;
            artifacts::record(cfg, "validate multi", &[&csv, &summary])?;
            let n = profile.horizon();
            println!("multi-step errors, N = {n}, {} windows ({})", profile.starts.len(), cfg.identification.method);
            println!("{:<6}{:>16}{:>16}", "", "mean at N [K]", "std at N [K]");
            for (o, name) in ["T_b", "T_w", "T_c"].iter().enumerate().take(profile.mean.ncols()) {
                println!("{:<6}{:>16.4}{:>16.4}", name, profile.mean[(n - 1, o)], profile.std[(n - 1, o)]);
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct MpcReport {
    pub config_hash: String,
    pub seed: u64,
    pub method: Method,
    pub horizon: usize,
    pub steps: usize,
    pub transient_steps: usize,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
    pub demand_satisfaction_pct: f64,
    pub max_slack_k: f64,
    pub unconverged_steps: usize,
    pub wall_time_s: f64,
}

pub fn mpc(cfg: &WorkbenchConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let params = load_params(cfg)?;
    let val = load_val(cfg)?;
    let start: FinalState = serde_json::from_str(&fs::read_to_string(need(dir, FINAL_STATE, "simulate")?)?)
        .map_err(|e| CliError::Data(format!("{FINAL_STATE}: {e}")))?;
    let m = &cfg.mpc;
    let demand = match &m.demand_profile {
        Some(p) => DemandProfile::from_csv(p)?,
        None => DemandProfile::heating_day(),
    };
    let pp = cfg.plant_params();
    let t_r = scenario_return_temp(m.steps + m.ocp.horizon, cfg.seed, pp.dt, &m.return_temp)?;
    let scenario = Scenario::continuing(start.state, &val, params.sigma, t_r, demand, m.steps)?;
    let plant = Plant::new(pp)?;
    let clock = Instant::now();
    let log = closed_loop(&plant, &params, &m.ocp, &scenario)?;
    let wall = clock.elapsed().as_secs_f64();
    let s = log.summary(m.transient_steps);
    fs::create_dir_all(dir.join("mpc"))?;
    log.write_csv(&dir.join(TRAJECTORY_CSV))?;
    let report = MpcReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        method: cfg.identification.method,
        horizon: m.ocp.horizon,
        steps: s.steps,
        transient_steps: m.transient_steps,
        mean_solve_ms: s.mean_solve_s * 1e3,
        max_solve_ms: s.max_solve_s * 1e3,
        demand_satisfaction_pct: s.demand_satisfaction_pct,
        max_slack_k: s.max_slack,
        unconverged_steps: s.unconverged_steps,
        wall_time_s: wall,
    };
    write_json(&dir.join(MPC_REPORT), &report)?;
    artifacts::record(cfg, "mpc", &[TRAJECTORY_CSV, MPC_REPORT])?;
    println!("closed loop: {} steps, N = {}, {:.1} s wall time", report.steps, report.horizon, wall);
    println!("mean / max QP solve time: {:.1} / {:.1} ms", report.mean_solve_ms, report.max_solve_ms);
    println!("demand met on {:.1}% of steps after the transient", report.demand_satisfaction_pct);
    println!("max slack {:.3} K, unconverged solves {}", report.max_slack_k, report.unconverged_steps);
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    seed: u64,
    method: Method,
    spectral_radius: f64,
    mean_tb: f64,
    mean_tw: f64,
    mean_tc: f64,
    std_tb: f64,
    std_tw: f64,
    std_tc: f64,
    mae_tb: f64,
    mae_tw: f64,
    mae_tc: f64,
    end_mean_tw: f64,
    end_mean_tc: f64,
}

fn sweep_one(cfg: &WorkbenchConfig, seed: u64) -> Result<SweepRow, CliError> {
    let mut c = cfg.clone();
    c.seed = seed;
    let rec = simulate_recording(&c.plant_params(), c.data.n_train, c.data.n_val, seed, &c.data.generation)?;
    let id = &c.identification;
    let params = sysid::identify(&rec.train, id.sigma, id.method, Some(id.p_max))?;
    let st = predictor::validate_single_step(&params, &rec.val)?.stats;
    let ds = predictor::with_lead_in(&rec.train, &rec.val, params.sigma)?;
    let prof = predictor::horizon_error_profile_with_jobs(&params, &ds, c.validation.horizon, c.validation.n_windows, 1)?;
    let end = prof.horizon() - 1;
    Ok(SweepRow {
        seed,
        method: id.method,
        spectral_radius: params.spectral_radius(),
        mean_tb: st.mean[0],
        mean_tw: st.mean[1],
        mean_tc: st.mean[2],
        std_tb: st.std[0],
        std_tw: st.std[1],
        std_tc: st.std[2],
        mae_tb: st.mae[0],
        mae_tw: st.mae[1],
        mae_tc: st.mae[2],
        end_mean_tw: prof.mean[(end, 1)],
        end_mean_tc: prof.mean[(end, 2)],
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn sweep(cfg: &WorkbenchConfig, seeds: u64, jobs: usize) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be positive".into()));
    }
    let all: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
    let chunk = all.len().div_ceil(jobs.clamp(1, all.len()));
    let rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = all
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&s| sweep_one(cfg, s)).collect::<Result<Vec<_>, CliError>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect::<Result<Vec<_>, CliError>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let file = format!("sweep/sweep_{}.csv", cfg.identification.method.to_string().to_lowercase());
    let path = cfg.output_dir.join(&file);
    fs::create_dir_all(path.parent().expect("sweep dir"))?;
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush()?;
    artifacts::record(cfg, "sweep", &[&file])?;
    let med = |f: fn(&SweepRow) -> f64| median(rows.iter().map(f).collect());
    println!("medians over {} seeds ({})", rows.len(), cfg.identification.method);
    println!("{:<6}{:>12}{:>12}{:>12}", "", "Mean [K]", "STD [K]", "MAE [K]");
    println!("{:<6}{:>12.4}{:>12.4}{:>12.4}", "T_b", med(|r| r.mean_tb), med(|r| r.std_tb), med(|r| r.mae_tb));
    println!("{:<6}{:>12.4}{:>12.4}{:>12.4}", "T_w", med(|r| r.mean_tw), med(|r| r.std_tw), med(|r| r.mae_tw));
    println!("{:<6}{:>12.4}{:>12.4}{:>12.4}", "T_c", med(|r| r.mean_tc), med(|r| r.std_tc), med(|r| r.mae_tc));
    println!("multi-step mean error at N: T_w {:.4} K, T_c {:.4} K", med(|r| r.end_mean_tw), med(|r| r.end_mean_tc));
    Ok(())
}

pub fn report(cfg: &WorkbenchConfig) -> Result<(), CliError> {
    let lines = artifacts::verify(&cfg.output_dir)?;
    for l in &lines {
        println!("{l}");
    }
    println!("{} artifacts verified", lines.len());
    let mpc_report = cfg.output_dir.join(MPC_REPORT);
    if mpc_report.exists() {
        println!("{}", fs::read_to_string(mpc_report)?);
    }
    Ok(())
}
