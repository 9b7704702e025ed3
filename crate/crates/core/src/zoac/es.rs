use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InitMode, LinearSchedule};
use super::trainer::{mean, norm, update_actor, ActorState, Best, IterationStats, Task, TuneResult};
use crate::env::{evaluate, Controller, Environment};
use crate::error::{Diagnostics, Error, Result};
use crate::param_space::{MappedVector, NativeVector};
use crate::rng::{standard_normal_vec, trainer_rng, worker_rng, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    /// Perturbations (one full episode each) per iteration.
    pub population: usize,
    pub sigma: f64,
    pub actor_lr: LinearSchedule,
    pub iterations: usize,
    pub seed: u64,
    pub mean_baseline: bool,
    /// Use `+eps, -eps` pairs; the population must then be even.
    pub antithetic: bool,
    pub init: InitMode,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Stop once this many environment steps have been used.
    pub max_env_steps: Option<u64>,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: 10,
            sigma: 0.08,
            actor_lr: LinearSchedule { start: 3e-2, end: 1e-2 },
            iterations: 300,
            seed: 0,
            mean_baseline: true,
            antithetic: false,
            init: InitMode::Random,
            eval_every: 1,
            eval_episodes: 10,
            eval_seed: 12_345,
            max_env_steps: None,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::config("es.population, es.eval_every and es.eval_episodes must be at least 1"));
        }
        if self.antithetic && self.population % 2 != 0 {
            return Err(Error::config("es.antithetic needs an even population"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("es.sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// `(1 / (n sigma)) * sum_i (f_i - b) eps_i` with `b` the mean return or zero.
pub fn es_gradient(returns: &[f64], noise: &[Vec<f64>], sigma: f64, mean_baseline: bool) -> Vec<f64> {
    let Some(d) = noise.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = returns.len() as f64;
    let b = if mean_baseline { returns.iter().sum::<f64>() / n } else { 0.0 };
    let mut g = vec![0.0; d];
    for (f, e) in returns.iter().zip(noise) {
        for (gi, ei) in g.iter_mut().zip(e) {
            *gi += (f - b) * ei;
        }
    }
    g.iter_mut().for_each(|gi| *gi /= n * sigma);
    g
}

/// Monte-Carlo estimate of the gradient of `E[f(theta + sigma eps)]`.
pub fn smoothed_gradient<F>(f: F, theta: &[f64], sigma: f64, samples: usize, rng: &mut SimRng, mean_baseline: bool) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let noise: Vec<Vec<f64>> = (0..samples).map(|_| standard_normal_vec(rng, theta.len())).collect();
    let returns: Vec<f64> = noise
        .iter()
        .map(|e| {
            let x: Vec<f64> = theta.iter().zip(e).map(|(t, ei)| t + sigma * ei).collect();
            f(&x)
        })
        .collect();
    es_gradient(&returns, &noise, sigma, mean_baseline)
}

struct EsWorker {
    env: Box<dyn Environment>,
    ctrl: Box<dyn Controller>,
    rng: SimRng,
}

fn run_episode(w: &mut EsWorker, theta: &NativeVector) -> Result<(f64, u64)> {
    w.ctrl.set_params(theta)?;
    w.ctrl.reset();
    let mut obs = w.env.reset(w.rng.random());
    let mut total = 0.0;
    let mut steps = 0u64;
    loop {
        let action = w.ctrl.act(&obs)?;
        let r = w.env.step(&action)?;
        if !r.cost.is_finite() {
            return Err(Error::NonFinite(Diagnostics::new("es rollout", "non-finite cost").step(steps as usize)));
        }
        total += r.cost;
        steps += 1;
        if r.done() {
            return Ok((total, steps));
        }
        obs = r.next_obs;
    }
}

/// Classic episodic evolution strategies on the mapped cube.
pub fn es_baseline(
    task: &dyn Task,
    cfg: &EsConfig,
    on_iteration: &mut dyn FnMut(&IterationStats) -> Result<()>,
) -> Result<TuneResult> {
    cfg.validate()?;
    let space = task.space();
    let d = space.dim();
    let mut trng = trainer_rng(cfg.seed);
    let mut actor = ActorState::new(cfg.init.initial_point(&space, &mut trng)?);
    let mut workers = (0..cfg.population)
        .map(|i| {
            Ok(EsWorker {
                env: task.make_env()?,
                ctrl: task.make_controller()?,
                rng: worker_rng(cfg.seed, i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eval_env = task.make_env()?;
    let mut eval_ctrl = task.make_controller()?;
    let mut evaluate_at = |theta: &MappedVector| {
        evaluate(
            eval_env.as_mut(),
            eval_ctrl.as_mut(),
            &space.to_native(theta)?,
            cfg.eval_episodes,
            cfg.eval_seed,
        )
    };
    let initial_eval = evaluate_at(&actor.theta)?;
    let mut best = Best {
        theta: actor.theta.clone(),
        eval: initial_eval.clone(),
        iteration: 0,
    };
    let mut history = Vec::new();
    let mut env_steps = 0u64;
    let started = Instant::now();

    for it in 0..cfg.iterations {
        if cfg.max_env_steps.is_some_and(|b| env_steps >= b) {
            break;
        }
        let noise: Vec<Vec<f64>> = if cfg.antithetic {
            let half: Vec<Vec<f64>> = (0..cfg.population / 2).map(|_| standard_normal_vec(&mut trng, d)).collect();
            half.iter().flat_map(|e| [e.clone(), e.iter().map(|x| -x).collect()]).collect()
        } else {
            (0..cfg.population).map(|_| standard_normal_vec(&mut trng, d)).collect()
        };
        let thetas = noise
            .iter()
            .map(|e| space.to_native(&actor.theta.perturbed(cfg.sigma, e)))
            .collect::<Result<Vec<_>>>()?;
        let results: Vec<Result<(f64, u64)>> = workers
            .par_iter_mut()
            .zip(thetas.par_iter())
            .enumerate()
            .map(|(i, (w, th))| {
                run_episode(w, th).map_err(|e| match e {
                    Error::NonFinite(diag) => Error::NonFinite(diag.worker(i)),
                    other => other,
                })
            })
            .collect();
        let mut costs = Vec::with_capacity(cfg.population);
        for r in results {
            let (c, s) = r?;
            costs.push(c);
            env_steps += s;
        }
        let returns: Vec<f64> = costs.iter().map(|c| -c).collect();
        let g = es_gradient(&returns, &noise, cfg.sigma, cfg.mean_baseline);
        let lr = cfg.actor_lr.at(it, cfg.iterations.saturating_sub(1));
        update_actor(&mut actor, &g, lr)?;

        let done = it + 1;
        let eval = if done % cfg.eval_every == 0 || done == cfg.iterations {
            let report = evaluate_at(&actor.theta)?;
            best.offer(&actor.theta, &report, done);
            Some(report)
        } else {
            None
        };
        let stats = IterationStats {
            iteration: done,
            env_steps,
            train_cost: mean(&costs),
            train_episodes: costs.len(),
            eval,
            actor_lr: lr,
            grad_norm: norm(&g),
            critic_loss: None,
            theta_mapped: actor.theta.0.clone(),
            theta_native: space.to_native(&actor.theta)?.0,
            wall_clock: started.elapsed().as_secs_f64(),
        };
        on_iteration(&stats)?;
        history.push(stats);
    }

    Ok(TuneResult {
        best_theta: space.to_native(&best.theta)?,
        best_theta_mapped: best.theta,
        best_eval: best.eval,
        best_iteration: best.iteration,
        final_theta_mapped: actor.theta,
        initial_eval,
        history,
        critic: None,
        total_env_steps: env_steps,
    })
}
