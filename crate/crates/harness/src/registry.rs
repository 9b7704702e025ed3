//! Maps a task id and its settings onto a [`Task`].

use zoac_core::env::{Controller, Environment};
use zoac_core::param_space::{ParamSpace, ParamSpec};
use zoac_core::tasks::{AccTask, BanditTask, TrackingTask};
use zoac_core::tracking::TrackingScenario;
use zoac_core::zoac::Task;

use crate::config::{ExperimentConfig, ParamOverride, TaskId};
use crate::error::{HarnessError, Result};

/// A task whose search box was edited by the config.
struct Reboxed {
    inner: Box<dyn Task>,
    space: ParamSpace,
}

impl Task for Reboxed {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn space(&self) -> ParamSpace {
        self.space.clone()
    }

    fn make_env(&self) -> zoac_core::Result<Box<dyn Environment>> {
        self.inner.make_env()
    }

    fn make_controller(&self) -> zoac_core::Result<Box<dyn Controller>> {
        self.inner.make_controller()
    }
}

pub fn tracking_task(cfg: &ExperimentConfig) -> Result<TrackingTask> {
    let t = &cfg.tracking;
    let scenario = TrackingScenario {
        horizon: t.horizon,
        regularization: (cfg.task == TaskId::TrackingMpcReg).then_some(t.zeta),
        ..t.scenario.clone()
    };
    Ok(TrackingTask::new(scenario, t.solver.clone())?)
}

pub fn build_task(cfg: &ExperimentConfig) -> Result<Box<dyn Task>> {
    let task: Box<dyn Task> = match cfg.task {
        TaskId::AccPid => {
            cfg.acc.validate()?;
            Box::new(AccTask {
                scenario: cfg.acc.clone(),
            })
        }
        TaskId::TrackingMpc | TaskId::TrackingMpcReg => Box::new(tracking_task(cfg)?),
        TaskId::ToyQuadratic => Box::new(BanditTask {
            target: cfg.toy.target.clone(),
        }),
    };
    // constructing one env surfaces scenario errors before any run starts
    task.make_env()?;
    if cfg.params.is_empty() {
        return Ok(task);
    }
    let space = apply_overrides(&task.space(), &cfg.params)?;
    Ok(Box::new(Reboxed { inner: task, space }))
}

pub fn apply_overrides(space: &ParamSpace, overrides: &[ParamOverride]) -> Result<ParamSpace> {
    let mut specs: Vec<ParamSpec> = space.specs().to_vec();
    for (i, o) in overrides.iter().enumerate() {
        let idx = space.index_of(&o.name).ok_or_else(|| {
            let names: Vec<&str> = space.names().collect();
            HarnessError::config(format!("params[{i}].name: unknown parameter `{}`; valid: {}", o.name, names.join(", ")))
        })?;
        let s = &mut specs[idx];
        if let Some(l) = o.lower {
            s.lower = l;
        }
        if let Some(u) = o.upper {
            s.upper = u;
        }
        if let Some(sc) = o.scale {
            s.scale = sc;
        }
    }
    ParamSpace::new(specs).map_err(|e| HarnessError::config(format!("params: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_task_ids() {
        for id in TaskId::ALL {
            let cfg = ExperimentConfig::defaults_for(id);
            assert_eq!(build_task(&cfg).unwrap().name(), id.as_str());
        }
    }

    #[test]
    fn bounds_override() {
        let mut cfg = ExperimentConfig::defaults_for(TaskId::AccPid);
        cfg.params.push(ParamOverride {
            name: "kp".into(),
            lower: None,
            upper: Some(5.0),
            scale: None,
        });
        let space = build_task(&cfg).unwrap().space();
        assert_eq!(space.specs()[1].upper, 5.0);
        cfg.params[0].name = "zz".into();
        assert!(build_task(&cfg).err().expect("rejected").to_string().contains("zz"));
    }
}
