use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::config::ZoacConfig;
use crate::adam::Adam;
use crate::critic::{
    segment_advantage, train_critic, value_targets, CriticTrainConfig, InputNormalizer, TrajectoryView, ValueNet,
    ValueTargetSet,
};
use crate::env::{evaluate, Controller, Environment, EpisodeCursor, EvaluationReport, SegmentRecord, Transition};
use crate::error::{Diagnostics, Error, Result};
use crate::param_space::{MappedVector, NativeVector, ParamSpace};
use crate::rng::{standard_normal_vec, trainer_rng, worker_rng, SimRng};

/// Everything a tuner needs to know about a task.
pub trait Task: Sync {
    fn name(&self) -> &str;
    fn space(&self) -> ParamSpace;
    fn make_env(&self) -> Result<Box<dyn Environment>>;
    fn make_controller(&self) -> Result<Box<dyn Controller>>;
}

/// One rollout worker with its own environment, controller and random stream.
pub struct Worker {
    pub id: usize,
    pub env: Box<dyn Environment>,
    pub ctrl: Box<dyn Controller>,
    pub rng: SimRng,
    pub cursor: EpisodeCursor,
}

impl Worker {
    pub fn new(id: usize, task: &dyn Task, seed: u64) -> Result<Self> {
        let mut env = task.make_env()?;
        let mut ctrl = task.make_controller()?;
        let mut rng = worker_rng(seed, id);
        let cursor = EpisodeCursor::start(env.as_mut(), ctrl.as_mut(), &mut rng);
        Ok(Self {
            id,
            env,
            ctrl,
            rng,
            cursor,
        })
    }
}

fn tag_worker(e: Error, worker: usize, slot: usize) -> Error {
    match e {
        Error::NonFinite(d) => Error::NonFinite(d.worker(worker)),
        Error::Solver(msg) => Error::Solver(format!("worker {worker} slot {slot}: {msg}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    /// Worker-major, then slot order; a slot split by an episode end yields several records.
    pub records: Vec<SegmentRecord>,
    /// Costs of behaviour episodes that finished during the collection.
    pub finished_costs: Vec<f64>,
    pub steps: u64,
}

/// Runs `H` perturbed segments of `N` steps on every worker.
pub fn collect_iteration(
    workers: &mut [Worker],
    theta_m: &MappedVector,
    space: &ParamSpace,
    cfg: &ZoacConfig,
) -> Result<Collection> {
    let per_worker: Vec<Result<(Vec<SegmentRecord>, Vec<f64>, u64)>> = workers
        .par_iter_mut()
        .map(|w| {
            let mut records = Vec::with_capacity(cfg.segments);
            let before = w.cursor.steps_taken;
            for slot in 0..cfg.segments {
                let noise = standard_normal_vec(&mut w.rng, space.dim());
                let theta = space.to_native(&theta_m.perturbed(cfg.sigma, &noise))?;
                w.ctrl.set_params(&theta)?;
                let mut left = cfg.segment_length;
                while left > 0 {
                    let transitions =
                        crate::env::rollout_segment(w.env.as_mut(), w.ctrl.as_mut(), &mut w.cursor, &mut w.rng, left)
                            .map_err(|e| tag_worker(e, w.id, slot))?;
                    left -= transitions.len();
                    records.push(SegmentRecord {
                        worker: w.id,
                        slot,
                        noise: noise.clone(),
                        transitions,
                        advantage: 0.0,
                    });
                }
            }
            Ok((records, w.cursor.drain_finished(), w.cursor.steps_taken - before))
        })
        .collect();
    let mut out = Collection {
        records: Vec::new(),
        finished_costs: Vec::new(),
        steps: 0,
    };
    for r in per_worker {
        let (records, finished, steps) = r?;
        out.records.extend(records);
        out.finished_costs.extend(finished);
        out.steps += steps;
    }
    Ok(out)
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize, dim: usize, norm: &InputNormalizer) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(n * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        flat.extend_from_slice(r);
    }
    let mut x = Array2::from_shape_vec((n, dim), flat).expect("row count");
    norm.apply(&mut x);
    Ok(x)
}

/// Critic inputs of every transition, normalised.
pub fn observation_matrix(records: &[SegmentRecord], norm: &InputNormalizer) -> Result<Array2<f64>> {
    let n: usize = records.iter().map(|r| r.len()).sum();
    stack(
        records.iter().flat_map(|r| r.transitions.iter().map(|t| t.obs.as_slice())),
        n,
        norm.dim(),
        norm,
    )
}

/// Fills in segment advantages with the current critic and returns the value
/// targets for every visited state. Each worker's records are treated as one
/// continuous trajectory, split only at episode boundaries.
pub fn estimate_advantages(
    net: &ValueNet,
    norm: &InputNormalizer,
    records: &mut [SegmentRecord],
    gamma: f64,
    lambda: f64,
) -> Result<ValueTargetSet> {
    let n: usize = records.iter().map(|r| r.len()).sum();
    let states = observation_matrix(records, norm)?;
    let next_states = stack(
        records.iter().flat_map(|r| r.transitions.iter().map(|t| t.next_obs.as_slice())),
        n,
        norm.dim(),
        norm,
    )?;
    let values = net.forward_batch(states.view())?;
    let next_values = net.forward_batch(next_states.view())?;
    let flags = |f: fn(&Transition) -> bool| -> Vec<bool> {
        records.iter().flat_map(|r| r.transitions.iter().map(f)).collect()
    };
    let rewards: Vec<f64> = records.iter().flat_map(|r| r.transitions.iter().map(|t| -t.cost)).collect();
    let terminated = flags(|t| t.terminated);
    let truncated = flags(|t| t.truncated);
    let (values, next_values) = (values.to_vec(), next_values.to_vec());

    let mut targets = Vec::with_capacity(n);
    let mut start = 0;
    let mut rec = 0;
    while rec < records.len() {
        // span of this worker
        let worker = records[rec].worker;
        let mut end = start;
        let mut last = rec;
        while last < records.len() && records[last].worker == worker {
            end += records[last].len();
            last += 1;
        }
        let view = |a: usize, b: usize| TrajectoryView {
            rewards: &rewards[a..b],
            values: &values[a..b],
            next_values: &next_values[a..b],
            terminated: &terminated[a..b],
            truncated: &truncated[a..b],
        };
        targets.extend(value_targets(view(start, end), gamma, lambda));
        let mut s = start;
        for r in &mut records[rec..last] {
            r.advantage = segment_advantage(view(s, s + r.len()), gamma, lambda);
            s += r.len();
        }
        start = end;
        rec = last;
    }
    Ok(ValueTargetSet {
        states,
        targets: Array1::from(targets),
    })
}

/// `(1 / (slots * sigma)) * sum_k A_k eps_k`, optionally standardising the advantages first.
pub fn actor_gradient(records: &[SegmentRecord], slots: usize, sigma: f64, standardize: bool) -> Vec<f64> {
    let Some(d) = records.first().map(|r| r.noise.len()) else {
        return Vec::new();
    };
    let mut adv: Vec<f64> = records.iter().map(|r| r.advantage).collect();
    if standardize && !adv.is_empty() {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let sd = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        for a in &mut adv {
            *a = if sd > 1e-12 { (*a - mean) / sd } else { 0.0 };
        }
    }
    let mut g = vec![0.0; d];
    for (r, a) in records.iter().zip(&adv) {
        for (gi, e) in g.iter_mut().zip(&r.noise) {
            *gi += a * e;
        }
    }
    let denom = slots as f64 * sigma;
    g.iter_mut().for_each(|gi| *gi /= denom);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorState {
    pub theta: MappedVector,
    pub adam: Adam,
    pub iteration: usize,
}

impl ActorState {
    pub fn new(theta: MappedVector) -> Self {
        let adam = Adam::new(theta.len());
        Self {
            theta,
            adam,
            iteration: 0,
        }
    }
}

/// Adam ascent along `g` followed by projection onto the cube.
pub fn update_actor(actor: &mut ActorState, g: &[f64], lr: f64) -> Result<()> {
    if g.len() != actor.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: actor.theta.len(),
            got: g.len(),
        });
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(Diagnostics::new(
            "actor",
            format!("gradient component {i} is {}", g[i]),
        )));
    }
    actor.adam.ascend(&mut actor.theta.0, g, lr);
    actor.theta = actor.theta.clamp();
    actor.iteration += 1;
    debug_assert!(actor.theta.in_cube());
    Ok(())
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// 1-based count of completed iterations.
    pub iteration: usize,
    /// Cumulative environment steps.
    pub env_steps: u64,
    /// Mean cost of behaviour episodes that ended during this iteration.
    pub train_cost: Option<f64>,
    pub train_episodes: usize,
    pub eval: Option<EvaluationReport>,
    pub actor_lr: f64,
    pub grad_norm: f64,
    pub critic_loss: Option<f64>,
    pub theta_mapped: Vec<f64>,
    pub theta_native: Vec<f64>,
    pub wall_clock: f64,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_theta_mapped: MappedVector,
    pub best_theta: NativeVector,
    pub best_eval: EvaluationReport,
    /// Iteration after which the best point was evaluated (0 = initial point).
    pub best_iteration: usize,
    pub final_theta_mapped: MappedVector,
    pub initial_eval: EvaluationReport,
    pub history: Vec<IterationStats>,
    pub critic: Option<(ValueNet, InputNormalizer)>,
    pub total_env_steps: u64,
}

/// Tracks the evaluation minimum.
pub(crate) struct Best {
    pub theta: MappedVector,
    pub eval: EvaluationReport,
    pub iteration: usize,
}

impl Best {
    pub fn offer(&mut self, theta: &MappedVector, eval: &EvaluationReport, iteration: usize) {
        if eval.mean_cost < self.eval.mean_cost {
            self.theta = theta.clone();
            self.eval = eval.clone();
            self.iteration = iteration;
        }
    }
}

pub(crate) fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Controller tuning with timestep-wise parameter perturbation and a learned critic.
pub fn tune(
    task: &dyn Task,
    cfg: &ZoacConfig,
    on_iteration: &mut dyn FnMut(&IterationStats) -> Result<()>,
) -> Result<TuneResult> {
    cfg.validate()?;
    let space = task.space();
    let mut trng = trainer_rng(cfg.seed);
    let theta0 = cfg.init.initial_point(&space, &mut trng)?;
    let mut workers = (0..cfg.workers)
        .map(|i| Worker::new(i, task, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut eval_env = task.make_env()?;
    let mut eval_ctrl = task.make_controller()?;
    let obs_dim = eval_env.obs_dim();
    let mut net = ValueNet::new(obs_dim, &cfg.critic_hidden, &mut trng);
    let mut critic_adam = Adam::new(net.num_params());
    let critic_cfg = CriticTrainConfig {
        epochs: cfg.critic_epochs,
        minibatch: cfg.critic_batch,
        lr: cfg.critic_lr,
    };
    let mut normalizer: Option<InputNormalizer> = None;
    let mut actor = ActorState::new(theta0);

    let evaluate_at = |env: &mut dyn Environment, ctrl: &mut dyn Controller, theta: &MappedVector| {
        evaluate(env, ctrl, &space.to_native(theta)?, cfg.eval_episodes, cfg.eval_seed)
    };
    let initial_eval = evaluate_at(eval_env.as_mut(), eval_ctrl.as_mut(), &actor.theta)?;
    let mut best = Best {
        theta: actor.theta.clone(),
        eval: initial_eval.clone(),
        iteration: 0,
    };
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut env_steps = 0u64;
    let started = Instant::now();

    for it in 0..cfg.iterations {
        let mut col = collect_iteration(&mut workers, &actor.theta, &space, cfg)?;
        env_steps += col.steps;
        let norm_ref = normalizer.get_or_insert_with(|| {
            let raw = observation_matrix(&col.records, &InputNormalizer::identity(obs_dim)).expect("dims checked");
            InputNormalizer::fit(raw.view())
        });
        let targets = estimate_advantages(&net, norm_ref, &mut col.records, cfg.gamma, cfg.lambda)?;
        let trace = train_critic(&mut net, &mut critic_adam, &targets, &critic_cfg, &mut trng)?;

        let slots = cfg.workers * cfg.segments;
        let g = actor_gradient(&col.records, slots, cfg.sigma, cfg.standardize_advantages);
        let lr = cfg.actor_lr.at(it, cfg.iterations.saturating_sub(1));
        update_actor(&mut actor, &g, lr)?;

        let done = it + 1;
        let eval = if done % cfg.eval_every == 0 || done == cfg.iterations {
            let report = evaluate_at(eval_env.as_mut(), eval_ctrl.as_mut(), &actor.theta)?;
            best.offer(&actor.theta, &report, done);
            Some(report)
        } else {
            None
        };
        let stats = IterationStats {
            iteration: done,
            env_steps,
            train_cost: mean(&col.finished_costs),
            train_episodes: col.finished_costs.len(),
            eval,
            actor_lr: lr,
            grad_norm: norm(&g),
            critic_loss: trace.epochs.last().copied(),
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
        critic: Some((net, normalizer.unwrap_or_else(|| InputNormalizer::identity(obs_dim)))),
        total_env_steps: env_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;

    fn record(adv: f64, noise: Vec<f64>) -> SegmentRecord {
        SegmentRecord {
            worker: 0,
            slot: 0,
            noise,
            transitions: vec![],
            advantage: adv,
        }
    }

    #[test]
    fn gradient_formula() {
        assert_eq!(actor_gradient(&[record(2.0, vec![1.0, -1.0])], 1, 0.1, false), vec![20.0, -20.0]);
        assert_eq!(actor_gradient(&[record(0.0, vec![1.0, -1.0])], 1, 0.1, false), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_is_linear_in_advantages() {
        let recs: Vec<_> = (0..6).map(|i| record(i as f64 - 2.5, vec![(i as f64).sin(), (i as f64).cos()])).collect();
        let g = actor_gradient(&recs, 6, 0.2, false);
        let scaled: Vec<_> = recs.iter().map(|r| record(3.0 * r.advantage, r.noise.clone())).collect();
        let g3 = actor_gradient(&scaled, 6, 0.2, false);
        for (a, b) in g.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
        let shifted: Vec<_> = recs.iter().map(|r| record(r.advantage + 7.0, r.noise.clone())).collect();
        let gs = actor_gradient(&recs, 6, 0.2, true);
        let gs_shift = actor_gradient(&shifted, 6, 0.2, true);
        for (a, b) in gs.iter().zip(&gs_shift) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_keeps_theta() {
        let mut a = ActorState::new(MappedVector(vec![0.2, -0.4]));
        update_actor(&mut a, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(a.theta.0, vec![0.2, -0.4]);
    }

    #[test]
    fn constant_push_saturates_at_bound() {
        let mut a = ActorState::new(MappedVector(vec![0.0]));
        for _ in 0..200 {
            update_actor(&mut a, &[1.0], 0.05).unwrap();
            assert!(a.theta.in_cube());
        }
        assert_eq!(a.theta.0, vec![1.0]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut a = ActorState::new(MappedVector(vec![0.0]));
        assert!(matches!(update_actor(&mut a, &[f64::NAN], 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn advantages_split_at_segment_boundaries() {
        let t = |cost: f64, terminated: bool| Transition {
            obs: Observation(vec![0.0]),
            action: vec![],
            cost,
            next_obs: Observation(vec![0.0]),
            terminated,
            truncated: false,
        };
        let mut recs = vec![
            SegmentRecord {
                worker: 0,
                slot: 0,
                noise: vec![1.0],
                transitions: vec![t(1.0, false), t(2.0, false)],
                advantage: 0.0,
            },
            SegmentRecord {
                worker: 0,
                slot: 1,
                noise: vec![1.0],
                transitions: vec![t(3.0, true)],
                advantage: 0.0,
            },
        ];
        let net = ValueNet::zeros(1, &[4]);
        let targets = estimate_advantages(&net, &InputNormalizer::identity(1), &mut recs, 0.5, 0.5).unwrap();
        // V = 0: advantage is the (gamma*lambda)-discounted reward sum within the segment
        assert_eq!(recs[0].advantage, -1.0 - 0.25 * 2.0);
        assert_eq!(recs[1].advantage, -3.0);
        // targets chain across the segment boundary
        assert_eq!(targets.targets.to_vec(), vec![-1.0 - 0.25 * (2.0 + 0.25 * 3.0), -2.0 - 0.25 * 3.0, -3.0]);
    }
}
