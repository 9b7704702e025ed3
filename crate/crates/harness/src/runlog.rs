//! Per-run CSV logs and summaries.
//!
//! `curve.csv` holds one row per iteration and is a pure function of config
//! and seed. Wall-clock readings go to `timing.csv` so the curve stays
//! byte-for-byte reproducible.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zoac_core::env::EvaluationReport;
use zoac_core::zoac::{IterationStats, TuneResult};

use crate::error::{HarnessError, Result};

pub const CURVE_SCHEMA: u32 = 1;
pub const CURVE_FILE: &str = "curve.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FAILURE_FILE: &str = "failure.txt";

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn curve_header(param_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = [
        "iteration",
        "env_steps",
        "train_cost",
        "train_episodes",
        "eval_mean",
        "eval_std",
        "eval_terminated",
        "eval_prediction_error",
        "actor_lr",
        "grad_norm",
        "critic_loss",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(param_names.iter().map(|n| format!("theta_{n}")));
    h.extend(param_names.iter().map(|n| format!("mapped_{n}")));
    h
}

pub fn curve_row(s: &IterationStats) -> Vec<String> {
    let e = s.eval.as_ref();
    let mut row = vec![
        s.iteration.to_string(),
        s.env_steps.to_string(),
        opt(s.train_cost),
        s.train_episodes.to_string(),
        opt(e.map(|e| e.mean_cost)),
        opt(e.map(|e| e.std_cost)),
        e.map(|e| e.terminated_episodes.to_string()).unwrap_or_default(),
        opt(e.and_then(|e| e.mean_prediction_error)),
        fmt_f64(s.actor_lr),
        fmt_f64(s.grad_norm),
        opt(s.critic_loss),
    ];
    row.extend(s.theta_native.iter().map(|x| fmt_f64(*x)));
    row.extend(s.theta_mapped.iter().map(|x| fmt_f64(*x)));
    row
}

/// Streams curve and timing rows, flushing after every iteration.
pub struct RunWriter {
    curve: csv::Writer<File>,
    timing: csv::Writer<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, param_names: &[String]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut curve = csv::Writer::from_path(dir.join(CURVE_FILE))?;
        curve.write_record(curve_header(param_names))?;
        curve.flush()?;
        let mut timing = csv::Writer::from_path(dir.join(TIMING_FILE))?;
        timing.write_record(["iteration", "wall_clock_s"])?;
        timing.flush()?;
        Ok(Self { curve, timing })
    }

    pub fn append(&mut self, s: &IterationStats) -> Result<()> {
        self.curve.write_record(curve_row(s))?;
        self.curve.flush()?;
        self.timing.write_record([s.iteration.to_string(), format!("{:.3}", s.wall_clock)])?;
        self.timing.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_cost: f64,
    pub std_cost: f64,
    pub terminated_episodes: usize,
    pub mean_prediction_error: Option<f64>,
    pub episode_costs: Vec<f64>,
    pub episode_lengths: Vec<usize>,
}

impl From<&EvaluationReport> for EvalSummary {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            mean_cost: r.mean_cost,
            std_cost: r.std_cost,
            terminated_episodes: r.terminated_episodes,
            mean_prediction_error: r.mean_prediction_error,
            episode_costs: r.episode_costs.clone(),
            episode_lengths: r.episode_lengths.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub curve_schema: u32,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub iterations: usize,
    pub total_env_steps: u64,
    pub param_names: Vec<String>,
    pub best_iteration: usize,
    pub best_theta: Vec<f64>,
    pub best_theta_mapped: Vec<f64>,
    pub best_eval: EvalSummary,
    pub initial_eval: EvalSummary,
    /// Evaluation at the last iteration.
    pub final_eval: Option<EvalSummary>,
    pub final_theta_mapped: Vec<f64>,
}

impl RunSummary {
    pub fn new(task: &str, method: &str, seed: u64, names: &[String], r: &TuneResult) -> Self {
        Self {
            curve_schema: CURVE_SCHEMA,
            task: task.to_string(),
            method: method.to_string(),
            seed,
            iterations: r.history.len(),
            total_env_steps: r.total_env_steps,
            param_names: names.to_vec(),
            best_iteration: r.best_iteration,
            best_theta: r.best_theta.0.clone(),
            best_theta_mapped: r.best_theta_mapped.0.clone(),
            best_eval: (&r.best_eval).into(),
            initial_eval: (&r.initial_eval).into(),
            final_eval: r.history.last().and_then(|s| s.eval.as_ref()).map(Into::into),
            final_theta_mapped: r.final_theta_mapped.0.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(SUMMARY_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
    }
}

/// One evaluated point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub env_steps: u64,
    pub eval_mean: f64,
}

/// Reads the evaluated rows of a `curve.csv`.
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::config(format!("{}: missing column `{name}`", path.display())))
    };
    let (it, steps, eval) = (col("iteration")?, col("env_steps")?, col("eval_mean")?);
    let bad = |what: &str| HarnessError::config(format!("{}: unparsable {what}", path.display()));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec[eval].is_empty() {
            continue;
        }
        out.push(CurvePoint {
            iteration: rec[it].parse().map_err(|_| bad("iteration"))?,
            env_steps: rec[steps].parse().map_err(|_| bad("env_steps"))?,
            eval_mean: rec[eval].parse().map_err(|_| bad("eval_mean"))?,
        });
    }
    Ok(out)
}

/// Seed directories (those holding a curve file) below `dir`, sorted by name.
pub fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::config(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CURVE_FILE).is_file())
        .collect();
    out.sort();
    Ok(out)
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Seed-wise aggregate over the evaluated iterations every run reached.
pub fn write_aggregate(path: &Path, curves: &[Vec<CurvePoint>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "env_steps_mean", "eval_median", "eval_mean", "eval_min", "eval_max", "seeds"])?;
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    for i in 0..len {
        let pts: Vec<&CurvePoint> = curves.iter().map(|c| &c[i]).collect();
        let costs: Vec<f64> = pts.iter().map(|p| p.eval_mean).collect();
        let n = costs.len() as f64;
        let steps = pts.iter().map(|p| p.env_steps as f64).sum::<f64>() / n;
        w.write_record([
            pts[0].iteration.to_string(),
            fmt_f64(steps),
            fmt_f64(median(&costs)),
            fmt_f64(costs.iter().sum::<f64>() / n),
            fmt_f64(costs.iter().copied().fold(f64::INFINITY, f64::min)),
            fmt_f64(costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            costs.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
