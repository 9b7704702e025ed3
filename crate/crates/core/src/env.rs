//! Controller and environment contracts, rollouts and deterministic evaluation.
//!
//! Costs are non-negative and reported as costs everywhere; the trainer flips
//! the sign internally and maximizes reward `-cost`.

use rand::Rng;

use crate::error::{Diagnostics, Error, Result};
use crate::param_space::NativeVector;
use crate::rng::{eval_seeds, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Control input emitted by a controller.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Action {
    pub values: Vec<f64>,
    /// The controller's own one-step prediction of the plant state, if it
    /// carries an internal model.
    pub forecast: Option<Vec<f64>>,
    /// Set when the controller could not compute a fresh input and fell back
    /// to holding the previous one.
    pub fallback: bool,
}

impl Action {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Observation,
    /// Instantaneous cost, including the terminal penalty on a terminating step.
    pub cost: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: Vec<(&'static str, f64)>,
}

impl StepResult {
    pub fn info(&self, key: &str) -> Option<f64> {
        self.info.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
    }

    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub const PREDICTION_ERROR: &str = "prediction_error";

pub trait Controller: Send {
    fn set_params(&mut self, theta: &NativeVector) -> Result<()>;

    /// Clears internal state at an episode start.
    fn reset(&mut self);

    fn act(&mut self, obs: &Observation) -> Result<Action>;
}

pub trait Environment: Send {
    fn obs_dim(&self) -> usize;

    fn max_episode_length(&self) -> usize;

    /// Equal seeds give identical initial observations and disturbance sequences.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Must set `truncated` on the step that reaches `max_episode_length`
    /// unless the same step terminates.
    fn step(&mut self, action: &Action) -> Result<StepResult>;

    /// Enables per-step trajectory values in `StepResult::info`.
    fn set_tracing(&mut self, _on: bool) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Vec<f64>,
    pub cost: f64,
    pub next_obs: Observation,
    pub terminated: bool,
    pub truncated: bool,
}

/// Consecutive steps run under one parameter perturbation, ending at most at
/// an episode boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub worker: usize,
    pub slot: usize,
    pub noise: Vec<f64>,
    pub transitions: Vec<Transition>,
    /// Filled in by the critic.
    pub advantage: f64,
}

impl SegmentRecord {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminated)
    }

    pub fn truncated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.truncated)
    }

    /// True when the last state should be bootstrapped with the critic.
    pub fn bootstrap(&self) -> bool {
        !self.terminated()
    }
}

/// The running episode of one worker, carried across segments and iterations.
#[derive(Debug, Clone)]
pub struct EpisodeCursor {
    pub obs: Observation,
    pub episode_step: usize,
    pub episode_cost: f64,
    /// Undiscounted costs of episodes that finished since the last drain.
    pub finished: Vec<f64>,
    pub steps_taken: u64,
    needs_reset: bool,
}

impl EpisodeCursor {
    pub fn start(env: &mut dyn Environment, ctrl: &mut dyn Controller, rng: &mut SimRng) -> Self {
        ctrl.reset();
        let obs = env.reset(rng.random());
        Self {
            obs,
            episode_step: 0,
            episode_cost: 0.0,
            finished: Vec::new(),
            steps_taken: 0,
            needs_reset: false,
        }
    }

    fn restart(&mut self, env: &mut dyn Environment, ctrl: &mut dyn Controller, rng: &mut SimRng) {
        ctrl.reset();
        self.obs = env.reset(rng.random());
        self.episode_step = 0;
        self.episode_cost = 0.0;
        self.needs_reset = false;
    }

    pub fn drain_finished(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.finished)
    }
}

/// Runs up to `max_steps` steps from the cursor's state with the controller's
/// current parameters. Stops early at an episode boundary; the environment is
/// then reset so the next segment starts a fresh episode.
pub fn rollout_segment(
    env: &mut dyn Environment,
    ctrl: &mut dyn Controller,
    cursor: &mut EpisodeCursor,
    rng: &mut SimRng,
    max_steps: usize,
) -> Result<Vec<Transition>> {
    if cursor.needs_reset {
        cursor.restart(env, ctrl, rng);
    }
    let mut transitions = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let obs = cursor.obs.clone();
        let action = ctrl.act(&obs)?;
        let result = env.step(&action)?;
        if !result.cost.is_finite() || !result.next_obs.is_finite() {
            return Err(Error::NonFinite(
                Diagnostics::new("rollout", "non-finite cost or state").step(cursor.episode_step),
            ));
        }
        cursor.steps_taken += 1;
        cursor.episode_step += 1;
        cursor.episode_cost += result.cost;
        let done = result.done();
        cursor.obs = result.next_obs.clone();
        transitions.push(Transition {
            obs,
            action: action.values,
            cost: result.cost,
            next_obs: result.next_obs,
            terminated: result.terminated,
            truncated: result.truncated,
        });
        if done {
            cursor.finished.push(cursor.episode_cost);
            cursor.needs_reset = true;
            break;
        }
    }
    if cursor.needs_reset {
        cursor.restart(env, ctrl, rng);
    }
    Ok(transitions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub episode_costs: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_length: f64,
    /// Number of episodes that ended on a termination rather than by length.
    pub terminated_episodes: usize,
    pub mean_prediction_error: Option<f64>,
}

impl EvaluationReport {
    fn from_episodes(
        episode_costs: Vec<f64>,
        episode_lengths: Vec<usize>,
        terminated_episodes: usize,
        prediction_errors: Vec<f64>,
    ) -> Self {
        let (mean_cost, std_cost) = mean_std(&episode_costs);
        let mean_length =
            episode_lengths.iter().sum::<usize>() as f64 / episode_lengths.len().max(1) as f64;
        let mean_prediction_error = if prediction_errors.is_empty() {
            None
        } else {
            Some(mean_std(&prediction_errors).0)
        };
        Self {
            episode_costs,
            episode_lengths,
            mean_cost,
            std_cost,
            mean_length,
            terminated_episodes,
            mean_prediction_error,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn evaluate(
    env: &mut dyn Environment,
    ctrl: &mut dyn Controller,
    theta: &NativeVector,
    episodes: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    evaluate_with(env, ctrl, theta, episodes, seed, |_, _, _, _| {})
}

/// Like [`evaluate`], calling `on_step(episode, step, action, result)` after every step.
pub fn evaluate_with<F>(
    env: &mut dyn Environment,
    ctrl: &mut dyn Controller,
    theta: &NativeVector,
    episodes: usize,
    seed: u64,
    mut on_step: F,
) -> Result<EvaluationReport>
where
    F: FnMut(usize, usize, &Action, &StepResult),
{
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    ctrl.set_params(theta)?;
    let mut costs = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let mut terminated = 0;
    let mut prediction_errors = Vec::new();
    for (episode, ep_seed) in eval_seeds(seed, episodes).into_iter().enumerate() {
        ctrl.reset();
        let mut obs = env.reset(ep_seed);
        let mut total = 0.0;
        let mut pe_sum = 0.0;
        let mut pe_count = 0usize;
        let mut step = 0;
        loop {
            let action = ctrl.act(&obs)?;
            let result = env.step(&action)?;
            if !result.cost.is_finite() || !result.next_obs.is_finite() {
                return Err(Error::NonFinite(
                    Diagnostics::new("evaluate", "non-finite cost or state")
                        .episode(episode)
                        .step(step),
                ));
            }
            on_step(episode, step, &action, &result);
            total += result.cost;
            if let Some(pe) = result.info(PREDICTION_ERROR) {
                pe_sum += pe;
                pe_count += 1;
            }
            step += 1;
            if result.done() {
                if result.terminated {
                    terminated += 1;
                }
                break;
            }
            obs = result.next_obs;
        }
        costs.push(total);
        lengths.push(step);
        if pe_count > 0 {
            prediction_errors.push(pe_sum / pe_count as f64);
        }
    }
    Ok(EvaluationReport::from_episodes(
        costs,
        lengths,
        terminated,
        prediction_errors,
    ))
}
