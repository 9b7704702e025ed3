use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use zoac_core::checkpoint::Checkpoint;
use zoac_core::env::{evaluate, evaluate_with, EvaluationReport};
use zoac_core::param_space::{MappedVector, NativeVector};
use zoac_core::rng::stream;
use zoac_core::zoac::{es_baseline, tune, EsConfig, IterationStats, Task, ZoacConfig};

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::registry::{build_task, tracking_task};
use crate::runlog::{
    fmt_f64, median, read_curve, run_dirs, write_aggregate, EvalSummary, RunSummary, RunWriter, CHECKPOINT_FILE,
    CURVE_FILE, FAILURE_FILE,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Runs the configured method for every seed and writes logs, summaries and checkpoints.
pub fn cmd_tune(cfg: &ExperimentConfig, mut progress: impl FnMut(u64, &IterationStats)) -> Result<Vec<SeedRun>> {
    let task = build_task(cfg)?;
    let space = task.space();
    let names: Vec<String> = space.names().map(str::to_string).collect();
    let out = cfg.output_dir();
    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;

    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let dir = seed_dir(&out, seed);
        if dir.join(FAILURE_FILE).exists() {
            fs::remove_file(dir.join(FAILURE_FILE))?;
        }
        let mut writer = RunWriter::create(&dir, &names)?;
        let mut on_iteration = |s: &IterationStats| {
            progress(seed, s);
            writer
                .append(s)
                .map_err(|e| zoac_core::Error::Io(std::io::Error::other(e.to_string())))
        };
        let outcome = match cfg.method {
            Method::Zoac => tune(task.as_ref(), &ZoacConfig { seed, ..cfg.zoac.clone() }, &mut on_iteration),
            Method::Es => es_baseline(task.as_ref(), &EsConfig { seed, ..cfg.es.clone() }, &mut on_iteration),
        };
        let result = match outcome {
            Ok(r) => r,
            Err(e) => {
                fs::write(dir.join(FAILURE_FILE), format!("{e}\n"))?;
                return Err(e.into());
            }
        };
        Checkpoint::new(task.name(), &space, result.best_theta_mapped.clone(), result.critic.clone())?
            .save(&dir.join(CHECKPOINT_FILE))?;
        let summary = RunSummary::new(task.name(), cfg.method.as_str(), seed, &names, &result);
        summary.write(&dir)?;
        runs.push(SeedRun { seed, dir, summary });
    }

    let curves = runs
        .iter()
        .map(|r| read_curve(&r.dir.join(CURVE_FILE)))
        .collect::<Result<Vec<_>>>()?;
    write_aggregate(&out.join(AGGREGATE_FILE), &curves)?;
    Ok(runs)
}

/// Which controller parameters to evaluate.
#[derive(Debug, Clone)]
pub enum ParamSource {
    Checkpoint(PathBuf),
    /// The true-model, hand-weighted tracking controller.
    Nominal,
    Native(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub task: String,
    pub controller: String,
    pub episodes: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub report: EvalSummary,
    /// Tracking only: the nominal controller on the same episodes.
    pub nominal: Option<EvalSummary>,
    /// `report.mean_cost / nominal.mean_cost`.
    pub ratio_to_nominal: Option<f64>,
}

fn resolve_theta(cfg: &ExperimentConfig, task: &dyn Task, source: &ParamSource) -> Result<(String, NativeVector)> {
    let space = task.space();
    match source {
        ParamSource::Checkpoint(path) => {
            if !path.is_file() {
                return Err(HarnessError::config(format!("checkpoint {} does not exist", path.display())));
            }
            let ck = Checkpoint::load(path)?;
            if ck.task != task.name() {
                return Err(HarnessError::config(format!(
                    "checkpoint was written for task `{}`, config selects `{}`",
                    ck.task,
                    task.name()
                )));
            }
            ck.check_space(&space)?;
            Ok((format!("checkpoint:{}", path.display()), space.to_native(&ck.theta_mapped)?))
        }
        ParamSource::Nominal => {
            if !cfg.task.is_tracking() {
                return Err(HarnessError::config(format!("--nominal only applies to tracking tasks, not {}", cfg.task)));
            }
            Ok(("nominal".into(), tracking_task(cfg)?.nominal_theta()))
        }
        ParamSource::Native(v) => {
            let theta = NativeVector(v.clone());
            // round-trip through the mapping to reject out-of-box values
            space.to_mapped(&theta)?;
            Ok(("explicit".into(), theta))
        }
    }
}

/// Deterministic evaluation; optionally dumps every step to `trajectory` as CSV.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    source: &ParamSource,
    episodes: usize,
    seed: u64,
    trajectory: Option<&Path>,
) -> Result<EvaluationOutcome> {
    if episodes == 0 {
        return Err(HarnessError::config("episodes must be at least 1"));
    }
    let task = build_task(cfg)?;
    let (label, theta) = resolve_theta(cfg, task.as_ref(), source)?;
    let mut env = task.make_env()?;
    let mut ctrl = task.make_controller()?;
    let report = match trajectory {
        None => evaluate(env.as_mut(), ctrl.as_mut(), &theta, episodes, seed)?,
        Some(path) => {
            env.set_tracing(true);
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut header: Option<Vec<String>> = None;
            let report = evaluate_with(env.as_mut(), ctrl.as_mut(), &theta, episodes, seed, |ep, step, action, res| {
                if header.is_none() {
                    let mut h = vec!["episode".to_string(), "step".into(), "cost".into(), "terminated".into()];
                    h.extend((0..action.values.len()).map(|i| format!("action_{i}")));
                    h.extend(res.info.iter().map(|(k, _)| k.to_string()));
                    header = Some(h);
                }
                let mut row = vec![ep.to_string(), step.to_string(), fmt_f64(res.cost), res.terminated.to_string()];
                row.extend(action.values.iter().map(|x| fmt_f64(*x)));
                row.extend(res.info.iter().map(|(_, v)| fmt_f64(*v)));
                rows.push(row);
            })?;
            env.set_tracing(false);
            write_trajectory(path, header.unwrap_or_default(), rows)?;
            report
        }
    };
    let nominal = if cfg.task.is_tracking() && !matches!(source, ParamSource::Nominal) {
        let t = tracking_task(cfg)?;
        let mut ctrl = t.nominal_controller()?;
        Some(evaluate(env.as_mut(), &mut ctrl, &t.nominal_theta(), episodes, seed)?)
    } else {
        None
    };
    Ok(EvaluationOutcome {
        task: task.name().to_string(),
        controller: label,
        episodes,
        seed,
        theta: theta.0,
        ratio_to_nominal: nominal.as_ref().map(|n| report.mean_cost / n.mean_cost),
        report: (&report).into(),
        nominal: nominal.as_ref().map(EvalSummary::from),
    })
}

fn write_trajectory(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    // rows can be ragged only if the info keys change mid-run, which envs avoid
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeRow {
    pub value: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub terminated: usize,
}

/// 1-D cost profile along `dim` with the other parameters fixed at `reference`.
/// Grid points are evenly spaced in the mapped coordinate; every point sees
/// the same evaluation episodes.
pub fn cmd_landscape(
    cfg: &ExperimentConfig,
    dim: &str,
    points: usize,
    episodes: usize,
    seed: u64,
    reference: Option<&ParamSource>,
) -> Result<Vec<LandscapeRow>> {
    if points < 2 {
        return Err(HarnessError::config("landscape needs at least 2 grid points"));
    }
    if episodes == 0 {
        return Err(HarnessError::config("episodes must be at least 1"));
    }
    let task = build_task(cfg)?;
    let space = task.space();
    let idx = space.index_of(dim).ok_or_else(|| {
        let names: Vec<&str> = space.names().collect();
        HarnessError::config(format!("unknown dimension `{dim}`; valid: {}", names.join(", ")))
    })?;
    let base = match reference {
        Some(src) => space.to_mapped(&resolve_theta(cfg, task.as_ref(), src)?.1)?,
        None => MappedVector::zeros(space.dim()),
    };
    let mut env = task.make_env()?;
    let mut ctrl = task.make_controller()?;
    (0..points)
        .map(|i| {
            let mut m = base.clone();
            m.0[idx] = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            let theta = space.to_native(&m)?;
            let r: EvaluationReport = evaluate(env.as_mut(), ctrl.as_mut(), &theta, episodes, seed)?;
            Ok(LandscapeRow {
                value: theta.0[idx],
                mean_cost: r.mean_cost,
                std_cost: r.std_cost,
                terminated: r.terminated_episodes,
            })
        })
        .collect()
}

pub fn write_landscape(path: &Path, dim: &str, rows: &[LandscapeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([dim, "mean_cost", "std_cost", "terminated"])?;
    for r in rows {
        w.write_record([fmt_f64(r.value), fmt_f64(r.mean_cost), fmt_f64(r.std_cost), r.terminated.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub env_steps: u64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub budget: u64,
    pub methods: Vec<String>,
    /// Median over seeds of the last evaluation at or before `budget`.
    pub final_median: Vec<f64>,
    pub band: String,
    pub warnings: Vec<String>,
}

/// Percentile-bootstrap interval of the median.
pub fn bootstrap_median(values: &[f64], resamples: usize, level: f64, rng: &mut impl Rng) -> (f64, f64) {
    let n = values.len();
    let mut meds: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            let sample: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            median(&sample)
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let q = |p: f64| meds[((p * (meds.len() - 1) as f64).round() as usize).min(meds.len() - 1)];
    let alpha = (1.0 - level) / 2.0;
    (q(alpha), q(1.0 - alpha))
}

/// Last evaluation at or before `budget`.
fn value_at(curve: &[crate::runlog::CurvePoint], budget: u64) -> Option<f64> {
    curve.iter().take_while(|p| p.env_steps <= budget).last().map(|p| p.eval_mean)
}

/// Aligns run sets on cumulative environment steps and reports the
/// per-budget median with a 95% percentile-bootstrap band over seeds.
pub fn cmd_compare(sets: &[(String, PathBuf)], resamples: usize, seed: u64) -> Result<(Vec<CompareRow>, CompareSummary)> {
    if sets.len() < 2 {
        return Err(HarnessError::config("compare needs at least two run sets"));
    }
    let mut warnings = Vec::new();
    let mut loaded = Vec::new();
    for (name, dir) in sets {
        let dirs = run_dirs(dir)?;
        if dirs.is_empty() {
            return Err(HarnessError::config(format!("{}: no runs found", dir.display())));
        }
        let curves = dirs
            .iter()
            .map(|d| read_curve(&d.join(CURVE_FILE)))
            .collect::<Result<Vec<_>>>()?;
        if curves.iter().any(Vec::is_empty) {
            return Err(HarnessError::config(format!("{}: a run has no evaluated iterations", dir.display())));
        }
        loaded.push((name.clone(), curves));
    }
    let ends: Vec<u64> = loaded
        .iter()
        .flat_map(|(_, cs)| cs.iter().map(|c| c.last().expect("non-empty").env_steps))
        .collect();
    let budget = *ends.iter().min().expect("non-empty");
    if ends.iter().any(|&e| e != budget) {
        warnings.push(format!(
            "runs end at different budgets ({}..{} env steps); aligned on the common prefix up to {budget}",
            ends.iter().min().unwrap(),
            ends.iter().max().unwrap()
        ));
    }
    let mut budgets: Vec<u64> = loaded
        .iter()
        .flat_map(|(_, cs)| cs.iter().flat_map(|c| c.iter().map(|p| p.env_steps)))
        .filter(|&s| s <= budget)
        .collect();
    budgets.sort_unstable();
    budgets.dedup();

    let mut rng = stream(seed, 0);
    let mut rows = Vec::new();
    let mut final_median = Vec::new();
    for (name, curves) in &loaded {
        for &b in &budgets {
            let vals: Option<Vec<f64>> = curves.iter().map(|c| value_at(c, b)).collect();
            let Some(vals) = vals else { continue };
            let (lower, upper) = bootstrap_median(&vals, resamples, 0.95, &mut rng);
            rows.push(CompareRow {
                method: name.clone(),
                env_steps: b,
                median: median(&vals),
                lower,
                upper,
                seeds: vals.len(),
            });
        }
        let last: Vec<f64> = curves.iter().map(|c| value_at(c, budget).expect("budget within range")).collect();
        final_median.push(median(&last));
    }
    let summary = CompareSummary {
        budget,
        methods: loaded.iter().map(|(n, _)| n.clone()).collect(),
        final_median,
        band: format!("95% percentile bootstrap of the median over seeds, {resamples} resamples"),
        warnings,
    };
    Ok((rows, summary))
}

pub fn write_compare(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "env_steps", "median", "lower", "upper", "seeds"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.env_steps.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.lower),
            fmt_f64(r.upper),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
