//! Experiment configuration: TOML file, per-task defaults, `--set` overrides.
//!
//! Resolution order is task defaults, then the file, then the overrides.
//! Errors name the offending field by its dotted path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use zoac_core::acc::AccScenario;
use zoac_core::param_space::Scale;
use zoac_core::tracking::{SolverConfig, TrackingScenario};
use zoac_core::zoac::{EsConfig, InitMode, ZoacConfig};

use crate::error::{HarnessError, Result};

pub const OUTPUT_ROOT_VAR: &str = "ZOAC_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    AccPid,
    TrackingMpc,
    TrackingMpcReg,
    ToyQuadratic,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::AccPid, TaskId::TrackingMpc, TaskId::TrackingMpcReg, TaskId::ToyQuadratic];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::AccPid => "acc-pid",
            TaskId::TrackingMpc => "tracking-mpc",
            TaskId::TrackingMpcReg => "tracking-mpc-reg",
            TaskId::ToyQuadratic => "toy-quadratic",
        }
    }

    pub fn is_tracking(self) -> bool {
        matches!(self, TaskId::TrackingMpc | TaskId::TrackingMpcReg)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = TaskId::ALL.iter().map(|t| t.as_str()).collect();
            HarnessError::config(format!("unknown task `{s}`; valid tasks: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Zoac,
    Es,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zoac => "zoac",
            Method::Es => "es",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSettings {
    /// Prediction horizon, shared by the observation window and the MPC.
    pub horizon: usize,
    /// Weight of the model-mismatch term for `tracking-mpc-reg`.
    pub zeta: f64,
    pub scenario: TrackingScenario,
    pub solver: SolverConfig,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        let scenario = TrackingScenario::default();
        Self {
            horizon: scenario.horizon,
            zeta: 50.0,
            solver: SolverConfig {
                horizon: scenario.horizon,
                ..Default::default()
            },
            scenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySettings {
    pub target: Vec<f64>,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self { target: vec![0.3, -0.2] }
    }
}

/// Replaces the bounds or scale of one named parameter of the task space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverride {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub scale: Option<Scale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Run directory, relative to the output root unless absolute.
    pub output: String,
    pub zoac: ZoacConfig,
    pub es: EsConfig,
    pub acc: AccScenario,
    pub tracking: TrackingSettings,
    pub toy: ToySettings,
    #[serde(default)]
    pub params: Vec<ParamOverride>,
}

impl ExperimentConfig {
    pub fn defaults_for(task: TaskId) -> Self {
        let zoac = match task {
            TaskId::AccPid => ZoacConfig::acc(),
            TaskId::TrackingMpc | TaskId::TrackingMpcReg => ZoacConfig::tracking(),
            TaskId::ToyQuadratic => ZoacConfig {
                workers: 4,
                segments: 2,
                segment_length: 5,
                sigma: 0.1,
                critic_hidden: vec![32, 32],
                init: InitMode::Center,
                ..ZoacConfig::default()
            },
        };
        let es = EsConfig {
            sigma: zoac.sigma,
            actor_lr: zoac.actor_lr,
            iterations: zoac.iterations,
            init: zoac.init.clone(),
            eval_episodes: zoac.eval_episodes,
            eval_seed: zoac.eval_seed,
            ..EsConfig::default()
        };
        Self {
            task,
            method: Method::Zoac,
            seeds: vec![0],
            output: task.as_str().to_string(),
            zoac,
            es,
            acc: AccScenario::default(),
            tracking: TrackingSettings::default(),
            toy: ToySettings::default(),
            params: Vec::new(),
        }
    }

    /// Reads `path` (if any), applies `key=value` overrides and fills task defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<Table>(&text).map_err(|e| HarnessError::config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        Self::from_table(user)
    }

    pub fn from_table(mut user: Table) -> Result<Self> {
        propagate_horizon(&mut user);
        let task: TaskId = match user.get("task") {
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(HarnessError::config(format!("task: expected a string, found {other}"))),
            None => return Err(HarnessError::config("task: missing field")),
        };
        let base = Table::try_from(Self::defaults_for(task))
            .map_err(|e| HarnessError::runtime(format!("serialising defaults: {e}")))?;
        let merged = merge(base, user);
        let cfg: Self = serde_path_to_error::deserialize(Value::Table(merged)).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::config(format!("{path}: {}", e.into_inner().to_string().split("\nin `").next().unwrap_or_default().trim_end()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds: at least one seed is required"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(HarnessError::config(format!("seeds: seed {s} is listed twice")));
        }
        self.zoac.validate().map_err(|e| HarnessError::config(e.to_string()))?;
        self.es.validate().map_err(|e| HarnessError::config(e.to_string()))?;
        let t = &self.tracking;
        if t.scenario.horizon != t.horizon || t.solver.horizon != t.horizon {
            return Err(HarnessError::config(format!(
                "tracking.horizon = {} but tracking.scenario.horizon = {} and tracking.solver.horizon = {}; set tracking.horizon instead",
                t.horizon, t.scenario.horizon, t.solver.horizon
            )));
        }
        if t.scenario.regularization.is_some() {
            return Err(HarnessError::config(
                "tracking.scenario.regularization: chosen by the task id, set tracking.zeta instead",
            ));
        }
        if !(t.zeta >= 0.0 && t.zeta.is_finite()) {
            return Err(HarnessError::config("tracking.zeta must be non-negative"));
        }
        if self.toy.target.is_empty() {
            return Err(HarnessError::config("toy.target must not be empty"));
        }
        crate::registry::build_task(self)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// The directory holding all seeds of this experiment.
    pub fn output_dir(&self) -> PathBuf {
        let p = PathBuf::from(&self.output);
        if p.is_absolute() {
            p
        } else {
            output_root().join(p)
        }
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `tracking.horizon` also sets the scenario and solver horizons unless those are given explicitly.
fn propagate_horizon(user: &mut Table) {
    let Some(Value::Table(t)) = user.get_mut("tracking") else {
        return;
    };
    let Some(h) = t.get("horizon").cloned() else {
        return;
    };
    for sub in ["scenario", "solver"] {
        if let Value::Table(st) = t.entry(sub).or_insert_with(|| Value::Table(Table::new())) {
            st.entry("horizon").or_insert_with(|| h.clone());
        }
    }
}

/// Deep merge: tables merge key by key, anything else in `over` wins.
pub fn merge(mut base: Table, over: Table) -> Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => {
                base.insert(k, Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Applies `a.b.c=value`. The value is parsed as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(HarnessError::config(format!("override `{spec}` has an empty key segment")));
    }
    let value = parse_literal(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(HarnessError::config(format!(
                    "override `{spec}`: `{}` is not a table",
                    parts[..=i].join(".")
                )))
            }
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
