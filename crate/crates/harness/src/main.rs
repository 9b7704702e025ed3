use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zoac_core::checkpoint::Checkpoint;
use zoac_harness::commands::{
    cmd_compare, cmd_evaluate, cmd_landscape, cmd_tune, write_compare, write_landscape, ParamSource,
};
use zoac_harness::{ExperimentConfig, HarnessError, Result};

#[derive(Parser)]
#[command(name = "zoac", version, about = "Tune parameterized controllers with zeroth-order actor-critic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set zoac.sigma=0.05` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Task id; shorthand for `--set task=...`
    #[arg(long)]
    task: Option<String>,
}

#[derive(Args, Clone)]
#[group(multiple = false)]
struct ParamArgs {
    /// Checkpoint written by `tune`
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Native parameter values, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured method for every seed
    Tune {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print only the final summary
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint, explicit parameters or the nominal tracking controller
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Evaluate the true-model, hand-weighted tracking MPC
        #[arg(long, conflicts_with_all = ["checkpoint", "theta"])]
        nominal: bool,
        /// Defaults to the task's evaluation episode count
        #[arg(long)]
        episodes: Option<usize>,
        /// Defaults to the task's evaluation seed
        #[arg(long)]
        seed: Option<u64>,
        /// Write every step of every episode to this CSV file
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Also write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter with the others held fixed
    Landscape {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Parameter name
        #[arg(long)]
        dim: String,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path; printed to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align finished run sets on env steps and report median curves
    Compare {
        /// `NAME=DIR`, where DIR holds one sub-directory per seed (repeatable)
        #[arg(long = "run", value_name = "NAME=DIR", required = true)]
        runs: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; a JSON summary is written next to it
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs, fallback_task: Option<&str>) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    match (&args.task, fallback_task) {
        (Some(t), _) => overrides.push(format!("task={t}")),
        (None, Some(t)) if args.config.is_none() => overrides.push(format!("task={t}")),
        _ => {}
    }
    overrides.extend(args.overrides.iter().cloned());
    ExperimentConfig::load(args.config.as_deref(), &overrides)
}

fn checkpoint_task(params: &ParamArgs) -> Result<Option<String>> {
    match &params.checkpoint {
        Some(p) if p.is_file() => Ok(Some(Checkpoint::load(p)?.task)),
        Some(p) => Err(HarnessError::config(format!("checkpoint {} does not exist", p.display()))),
        None => Ok(None),
    }
}

fn source(params: &ParamArgs, nominal: bool) -> Option<ParamSource> {
    if nominal {
        return Some(ParamSource::Nominal);
    }
    if let Some(p) = &params.checkpoint {
        return Some(ParamSource::Checkpoint(p.clone()));
    }
    params.theta.clone().map(ParamSource::Native)
}

fn eval_defaults(cfg: &ExperimentConfig) -> (usize, u64) {
    match cfg.method {
        zoac_harness::Method::Zoac => (cfg.zoac.eval_episodes, cfg.zoac.eval_seed),
        zoac_harness::Method::Es => (cfg.es.eval_episodes, cfg.es.eval_seed),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tune { cfg, quiet } => {
            let cfg = load_config(&cfg, None)?;
            eprintln!(
                "tuning {} with {} over seeds {:?} -> {}",
                cfg.task,
                cfg.method.as_str(),
                cfg.seeds,
                cfg.output_dir().display()
            );
            let runs = cmd_tune(&cfg, |seed, s| {
                if !quiet {
                    if let Some(e) = &s.eval {
                        eprintln!(
                            "seed {seed} iter {:>5} steps {:>9} eval {:.4} (terminated {})",
                            s.iteration, s.env_steps, e.mean_cost, e.terminated_episodes
                        );
                    }
                }
            })?;
            let mut out = std::io::stdout().lock();
            for r in &runs {
                let s = &r.summary;
                writeln!(
                    out,
                    "seed {}: best eval {:.4} (terminated {}) at iteration {}, theta {:?}, dir {}",
                    r.seed,
                    s.best_eval.mean_cost,
                    s.best_eval.terminated_episodes,
                    s.best_iteration,
                    s.best_theta,
                    r.dir.display()
                )?;
            }
        }
        Command::Evaluate {
            cfg,
            params,
            nominal,
            episodes,
            seed,
            trajectory,
            out,
        } => {
            let fallback = checkpoint_task(&params)?;
            let cfg = load_config(&cfg, fallback.as_deref())?;
            let src = source(&params, nominal)
                .ok_or_else(|| HarnessError::config("give one of --checkpoint, --theta or --nominal"))?;
            let (def_eps, def_seed) = eval_defaults(&cfg);
            let outcome = cmd_evaluate(
                &cfg,
                &src,
                episodes.unwrap_or(def_eps),
                seed.unwrap_or(def_seed),
                trajectory.as_deref(),
            )?;
            if let Some(p) = out {
                write_json(&p, &outcome)?;
            }
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Landscape {
            cfg,
            params,
            dim,
            points,
            episodes,
            seed,
            out,
        } => {
            let fallback = checkpoint_task(&params)?;
            let cfg = load_config(&cfg, fallback.as_deref())?;
            let (def_eps, def_seed) = eval_defaults(&cfg);
            let src = source(&params, false);
            let rows = cmd_landscape(
                &cfg,
                &dim,
                points,
                episodes.unwrap_or(def_eps),
                seed.unwrap_or(def_seed),
                src.as_ref(),
            )?;
            match out {
                Some(p) => write_landscape(&p, &dim, &rows)?,
                None => {
                    println!("{dim},mean_cost,std_cost,terminated");
                    for r in rows {
                        println!("{},{},{},{}", r.value, r.mean_cost, r.std_cost, r.terminated);
                    }
                }
            }
        }
        Command::Compare {
            runs,
            bootstrap,
            seed,
            out,
        } => {
            let sets = runs
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(n, d)| (n.to_string(), PathBuf::from(d)))
                        .ok_or_else(|| HarnessError::config(format!("--run `{s}` is not NAME=DIR")))
                })
                .collect::<Result<Vec<_>>>()?;
            let (rows, summary) = cmd_compare(&sets, bootstrap, seed)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            let path = out.unwrap_or_else(|| zoac_harness::config::output_root().join("compare.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write_compare(&path, &rows)?;
            write_json(&path.with_extension("json"), &summary)?;
            for (m, v) in summary.methods.iter().zip(&summary.final_median) {
                println!("{m}: median eval cost {v:.4} at {} env steps", summary.budget);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
