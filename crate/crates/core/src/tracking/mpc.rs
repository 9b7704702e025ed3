use serde::{Deserialize, Serialize};

use super::bicycle::{bicycle_step, bicycle_step_jacobian, BicycleParams, Input, State};
use crate::env::{Action, Controller, Observation};
use crate::error::{Error, Result};
use crate::param_space::{NativeVector, ParamSpace, ParamSpec};

/// Fixed longitudinal-speed stage weight.
pub const STAGE_SPEED_WEIGHT: f64 = 1e-2;

/// Diagonal weights of the MPC objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcWeights {
    pub stage: [f64; 6],
    pub terminal: [f64; 6],
    pub input: [f64; 2],
}

impl MpcWeights {
    /// Hand-set weights proportional to the task cost (scaled by 1/100).
    pub fn nominal() -> Self {
        let stage = [1e-6, 0.04, 0.1, STAGE_SPEED_WEIGHT, 1e-6, 0.02];
        Self {
            stage,
            terminal: stage,
            input: [5.0, 0.05],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.stage.iter().chain(&self.terminal).chain(&self.input);
        if all.clone().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config(format!("MPC weights must be positive and finite: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            stage: self.stage.map(|w| w * c),
            terminal: self.terminal.map(|w| w * c),
            input: self.input.map(|w| w * c),
        }
    }

    fn total(&self) -> f64 {
        self.stage.iter().chain(&self.terminal).chain(&self.input).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Prediction horizon N_p.
    pub horizon: usize,
    pub gamma: f64,
    pub max_iterations: usize,
    /// Stop when the projected-gradient infinity norm (scaled inputs) drops below this.
    pub tolerance: f64,
    pub max_steer: f64,
    pub max_accel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            gamma: 0.99,
            max_iterations: 60,
            tolerance: 1e-4,
            max_steer: 2.0 * std::f64::consts::PI / 15.0,
            max_accel: 3.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("mpc.horizon must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("mpc.gamma must be in (0, 1]"));
        }
        if !(self.tolerance > 0.0) || !(self.max_steer > 0.0) || !(self.max_accel > 0.0) {
            return Err(Error::config("mpc tolerance and input bounds must be positive"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> [f64; 2] {
        [self.max_steer, self.max_accel]
    }
}

/// One receding-horizon problem. Inputs are box constrained to `[-bounds, bounds]`.
#[derive(Debug, Clone, Copy)]
pub struct MpcProblem<'a> {
    pub x0: State,
    /// Reference states `X_r(0..=N_p)`.
    pub reference: &'a [State],
    pub model: &'a BicycleParams,
    pub weights: &'a MpcWeights,
    pub gamma: f64,
    pub bounds: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: Vec<Input>,
    /// Predicted states `X(0..=N_p)`.
    pub states: Vec<State>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the warm start.
    pub history: Vec<f64>,
}

fn quad(w: &[f64; 6], e: &[f64; 6]) -> f64 {
    (0..6).map(|i| w[i] * e[i] * e[i]).sum()
}

fn diff(a: &State, b: &State) -> State {
    std::array::from_fn(|i| a[i] - b[i])
}

impl MpcProblem<'_> {
    pub fn horizon(&self) -> usize {
        self.reference.len() - 1
    }

    fn check(&self, inputs: &[Input]) -> Result<()> {
        if self.reference.len() < 2 || inputs.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: inputs.len(),
            });
        }
        Ok(())
    }

    pub fn rollout(&self, inputs: &[Input]) -> Result<Vec<State>> {
        self.check(inputs)?;
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(self.x0);
        for u in inputs {
            let next = bicycle_step(states.last().unwrap(), u, self.model)?;
            states.push(next);
        }
        Ok(states)
    }

    fn objective_of(&self, states: &[State], inputs: &[Input]) -> f64 {
        let w = self.weights;
        let n = inputs.len();
        let mut disc = 1.0;
        let mut j = 0.0;
        for k in 0..n {
            let e = diff(&states[k], &self.reference[k]);
            let u = &inputs[k];
            j += disc * (quad(&w.stage, &e) + w.input[0] * u[0] * u[0] + w.input[1] * u[1] * u[1]);
            disc *= self.gamma;
        }
        j + disc * quad(&w.terminal, &diff(&states[n], &self.reference[n]))
    }

    /// Discounted shooting objective.
    pub fn objective(&self, inputs: &[Input]) -> Result<f64> {
        let states = self.rollout(inputs)?;
        Ok(self.objective_of(&states, inputs))
    }

    /// Objective and its exact gradient with respect to the input sequence (adjoint pass).
    pub fn objective_and_gradient(&self, inputs: &[Input]) -> Result<(f64, Vec<Input>)> {
        let states = self.rollout(inputs)?;
        let j = self.objective_of(&states, inputs);
        let w = self.weights;
        let n = inputs.len();
        let discounts: Vec<f64> = std::iter::successors(Some(1.0), |d| Some(d * self.gamma))
            .take(n + 1)
            .collect();

        let e_n = diff(&states[n], &self.reference[n]);
        let mut lam: State = std::array::from_fn(|i| 2.0 * discounts[n] * w.terminal[i] * e_n[i]);
        let mut grad = vec![[0.0; 2]; n];
        for k in (0..n).rev() {
            let (_, jx, ju) = bicycle_step_jacobian(&states[k], &inputs[k], self.model)?;
            for c in 0..2 {
                let bt: f64 = (0..6).map(|i| ju[i][c] * lam[i]).sum();
                grad[k][c] = 2.0 * discounts[k] * w.input[c] * inputs[k][c] + bt;
            }
            let e = diff(&states[k], &self.reference[k]);
            let next: State = std::array::from_fn(|c| {
                let at: f64 = (0..6).map(|i| jx[i][c] * lam[i]).sum();
                2.0 * discounts[k] * w.stage[c] * e[c] + at
            });
            lam = next;
        }
        Ok((j, grad))
    }
}

fn finite_objective(p: &MpcProblem<'_>, inputs: &[Input]) -> Option<(f64, Vec<Input>)> {
    match p.objective_and_gradient(inputs) {
        Ok((j, g)) if j.is_finite() && g.iter().flatten().all(|x| x.is_finite()) => Some((j, g)),
        _ => None,
    }
}

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking,
/// on inputs scaled by the box half-widths. The objective is normalised by the
/// weight sum, so a uniform rescaling of all weights gives the same iterates.
pub fn mpc_solve(problem: &MpcProblem<'_>, warm: &[Input], max_iterations: usize, tolerance: f64) -> Result<MpcSolution> {
    problem.check(warm)?;
    let h = problem.bounds;
    let scale = problem.weights.total();
    let n = warm.len();
    let to_inputs = |z: &[Input]| -> Vec<Input> { z.iter().map(|zk| [zk[0] * h[0], zk[1] * h[1]]).collect() };
    let eval = |z: &[Input]| -> Option<(f64, Vec<Input>)> {
        finite_objective(problem, &to_inputs(z)).map(|(j, g)| {
            let gz = g.iter().map(|gk| [gk[0] * h[0] / scale, gk[1] * h[1] / scale]).collect();
            (j / scale, gz)
        })
    };
    let project = |v: f64| v.clamp(-1.0, 1.0);

    let mut z: Vec<Input> = warm.iter().map(|u| [project(u[0] / h[0]), project(u[1] / h[1])]).collect();
    let (mut f, mut g) = eval(&z).ok_or_else(|| Error::Solver("non-finite objective at the initial guess".into()))?;
    let mut history = vec![f * scale];
    let gmax = g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut alpha = 1.0 / gmax.max(1e-8);
    let pg_norm = |z: &[Input], g: &[Input]| -> f64 {
        z.iter()
            .zip(g)
            .flat_map(|(zk, gk)| (0..2).map(move |c| (project(zk[c] - gk[c]) - zk[c]).abs()))
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    let mut converged = pg_norm(&z, &g) < tolerance;
    while !converged && iterations < max_iterations {
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<Input> = z
                .iter()
                .zip(&g)
                .map(|(zk, gk)| [project(zk[0] - step * gk[0]), project(zk[1] - step * gk[1])])
                .collect();
            let slope: f64 = trial
                .iter()
                .zip(&z)
                .zip(&g)
                .map(|((t, zk), gk)| (t[0] - zk[0]) * gk[0] + (t[1] - zk[1]) * gk[1])
                .sum();
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= f + 1e-4 * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((zn, fnew, gnew)) = accepted else { break };
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..n {
            for c in 0..2 {
                let s = zn[k][c] - z[k][c];
                ss += s * s;
                sy += s * (gnew[k][c] - g[k][c]);
            }
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-8, 1e8) } else { 1e8 };
        z = zn;
        f = fnew;
        g = gnew;
        iterations += 1;
        history.push(f * scale);
        converged = pg_norm(&z, &g) < tolerance;
    }

    let inputs = to_inputs(&z);
    let states = problem.rollout(&inputs)?;
    let objective = problem.objective_of(&states, &inputs);
    Ok(MpcSolution {
        inputs,
        states,
        objective,
        iterations,
        converged,
        history,
    })
}

/// Names of the 19 tuned quantities: six model parameters, then the
/// log-scaled weights (stage without the fixed speed entry, terminal, input).
pub const TUNED_NAMES: [&str; 19] = [
    "iz", "kf", "kr", "lf", "lr", "m", "qs_x", "qs_y", "qs_phi", "qs_v", "qs_omega", "qt_x", "qt_y", "qt_phi", "qt_u",
    "qt_v", "qt_omega", "r_delta", "r_a",
];

pub fn tracking_space() -> ParamSpace {
    let mut specs = vec![
        ParamSpec::linear("iz", 1e3, 2e3),
        ParamSpec::linear("kf", -16e4, -8e4),
        ParamSpec::linear("kr", -16e4, -8e4),
        ParamSpec::linear("lf", 0.8, 2.2),
        ParamSpec::linear("lr", 0.8, 2.2),
        ParamSpec::linear("m", 1e3, 2e3),
    ];
    specs.extend(TUNED_NAMES[6..].iter().map(|n| ParamSpec::log(*n, 1e-6, 1e2)));
    ParamSpace::new(specs).expect("static space")
}

/// Splits a native tuning vector into model parameters and weights.
pub fn unpack_tuned(theta: &[f64], ts: f64) -> Result<(BicycleParams, MpcWeights)> {
    if theta.len() != TUNED_NAMES.len() {
        return Err(Error::DimensionMismatch {
            expected: TUNED_NAMES.len(),
            got: theta.len(),
        });
    }
    let model = BicycleParams::from_slice(&theta[..6], ts)?;
    let w = &theta[6..];
    let weights = MpcWeights {
        stage: [w[0], w[1], w[2], STAGE_SPEED_WEIGHT, w[3], w[4]],
        terminal: [w[5], w[6], w[7], w[8], w[9], w[10]],
        input: [w[11], w[12]],
    };
    weights.validate()?;
    Ok((model, weights))
}

/// Inverse of [`unpack_tuned`]; the fixed stage speed weight is dropped.
pub fn pack_tuned(model: &BicycleParams, weights: &MpcWeights) -> NativeVector {
    let mut v = model.to_array().to_vec();
    let s = &weights.stage;
    v.extend_from_slice(&[s[0], s[1], s[2], s[4], s[5]]);
    v.extend_from_slice(&weights.terminal);
    v.extend_from_slice(&weights.input);
    NativeVector(v)
}

/// Receding-horizon controller. Observation: current state followed by the
/// `N_p` upcoming reference states. Action: `[delta, a]` with the model's
/// one-step forecast attached.
#[derive(Debug, Clone)]
pub struct MpcController {
    solver: SolverConfig,
    model: BicycleParams,
    weights: MpcWeights,
    warm: Vec<Input>,
    last: Input,
    last_solution: Option<MpcSolution>,
}

impl MpcController {
    pub fn new(solver: SolverConfig, model: BicycleParams, weights: MpcWeights) -> Result<Self> {
        solver.validate()?;
        weights.validate()?;
        let warm = vec![[0.0; 2]; solver.horizon];
        Ok(Self {
            solver,
            model,
            weights,
            warm,
            last: [0.0; 2],
            last_solution: None,
        })
    }

    /// True model with hand-set weights.
    pub fn nominal(solver: SolverConfig, ts: f64) -> Result<Self> {
        Self::new(solver, BicycleParams { ts, ..BicycleParams::TRUE }, MpcWeights::nominal())
    }

    pub fn model(&self) -> &BicycleParams {
        &self.model
    }

    pub fn weights(&self) -> &MpcWeights {
        &self.weights
    }

    pub fn last_solution(&self) -> Option<&MpcSolution> {
        self.last_solution.as_ref()
    }

    pub fn obs_dim(&self) -> usize {
        6 * (self.solver.horizon + 1)
    }
}

impl Controller for MpcController {
    fn set_params(&mut self, theta: &NativeVector) -> Result<()> {
        let (model, weights) = unpack_tuned(theta.as_slice(), self.model.ts)?;
        self.model = model;
        self.weights = weights;
        Ok(())
    }

    fn reset(&mut self) {
        self.warm = vec![[0.0; 2]; self.solver.horizon];
        self.last = [0.0; 2];
        self.last_solution = None;
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let o = obs.as_slice();
        if o.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim(),
                got: o.len(),
            });
        }
        let x0: State = std::array::from_fn(|i| o[i]);
        // the k = 0 state term does not depend on the inputs
        let reference: Vec<State> = o.chunks_exact(6).map(|c| std::array::from_fn(|i| c[i])).collect();
        let problem = MpcProblem {
            x0,
            reference: &reference,
            model: &self.model,
            weights: &self.weights,
            gamma: self.solver.gamma,
            bounds: self.solver.bounds(),
        };
        match mpc_solve(&problem, &self.warm, self.solver.max_iterations, self.solver.tolerance) {
            Ok(sol) => {
                let u0 = sol.inputs[0];
                self.warm.clear();
                self.warm.extend_from_slice(&sol.inputs[1..]);
                self.warm.push(*sol.inputs.last().unwrap());
                self.last = u0;
                let forecast = sol.states[1].to_vec();
                self.last_solution = Some(sol);
                Ok(Action {
                    values: u0.to_vec(),
                    forecast: Some(forecast),
                    fallback: false,
                })
            }
            Err(Error::Solver(_)) | Err(Error::Singular(_)) => {
                let u = self.last;
                self.warm = vec![u; self.solver.horizon];
                self.last_solution = None;
                Ok(Action {
                    values: u.to_vec(),
                    forecast: bicycle_step(&x0, &u, &self.model).ok().map(|s| s.to_vec()),
                    fallback: true,
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trainer_rng;
    use rand::Rng;

    fn straight_reference(n: usize, speed: f64) -> Vec<State> {
        (0..=n).map(|k| [k as f64 * 0.1 * speed, 0.0, 0.0, speed, 0.0, 0.0]).collect()
    }

    #[test]
    fn on_reference_gives_zero_inputs() {
        let reference = straight_reference(10, 10.0);
        let w = MpcWeights::nominal();
        let p = MpcProblem {
            x0: reference[0],
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.99,
            bounds: [0.4, 3.0],
        };
        let sol = mpc_solve(&p, &vec![[0.0; 2]; 10], 60, 1e-4).unwrap();
        assert!(sol.converged);
        assert!(sol.objective < 1e-20);
        assert!(sol.inputs.iter().flatten().all(|u| u.abs() < 1e-12));
    }

    #[test]
    fn objective_history_never_increases() {
        let reference = straight_reference(15, 10.0);
        let w = MpcWeights::nominal();
        let mut x0 = reference[0];
        x0[1] = 1.0;
        x0[2] = 0.1;
        let p = MpcProblem {
            x0,
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.99,
            bounds: [0.4, 3.0],
        };
        let sol = mpc_solve(&p, &vec![[0.0; 2]; 15], 60, 1e-4).unwrap();
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.objective < sol.history[0]);
    }

    #[test]
    fn effort_only_weights_give_zero_inputs() {
        let reference = straight_reference(8, 10.0);
        let w = MpcWeights {
            stage: [1e-12; 6],
            terminal: [1e-12; 6],
            input: [1.0, 1.0],
        };
        let mut x0 = reference[0];
        x0[1] = 0.5;
        let p = MpcProblem {
            x0,
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.99,
            bounds: [0.4, 3.0],
        };
        let sol = mpc_solve(&p, &vec![[0.2, 1.0]; 8], 60, 1e-6).unwrap();
        assert!(sol.inputs.iter().flatten().all(|u| u.abs() < 1e-4));
    }

    #[test]
    fn lateral_offset_steers_back() {
        // vehicle 1 m to the left of a straight reference: steer right (negative delta)
        let reference = straight_reference(10, 10.0);
        let mut x0 = reference[0];
        x0[1] = 1.0;
        let mut ctrl = MpcController::new(
            SolverConfig {
                horizon: 10,
                ..Default::default()
            },
            BicycleParams::TRUE,
            MpcWeights::nominal(),
        )
        .unwrap();
        let mut obs = x0.to_vec();
        for r in &reference[1..] {
            obs.extend_from_slice(r);
        }
        let a = ctrl.act(&Observation(obs.clone())).unwrap();
        assert!(a.values[0] < 0.0, "delta = {}", a.values[0]);
        assert!(!a.fallback);
        ctrl.reset();
        let b = ctrl.act(&Observation(obs)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = trainer_rng(21);
        let reference: Vec<State> = (0..=6)
            .map(|k| [k as f64, rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2), 10.0, 0.0, 0.1])
            .collect();
        let w = MpcWeights {
            stage: std::array::from_fn(|_| rng.random_range(0.1..2.0)),
            terminal: std::array::from_fn(|_| rng.random_range(0.1..2.0)),
            input: [0.5, 0.2],
        };
        let p = MpcProblem {
            x0: [0.0, 0.3, 0.05, 9.0, 0.1, -0.05],
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.95,
            bounds: [0.4, 3.0],
        };
        let u: Vec<Input> = (0..6).map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-1.0..1.0)]).collect();
        let (_, g) = p.objective_and_gradient(&u).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            for c in 0..2 {
                let mut up = u.clone();
                up[k][c] += h;
                let mut um = u.clone();
                um[k][c] -= h;
                let fd = (p.objective(&up).unwrap() - p.objective(&um).unwrap()) / (2.0 * h);
                let rel = (fd - g[k][c]).abs() / fd.abs().max(g[k][c].abs()).max(1e-6);
                assert!(rel < 1e-5, "k={k} c={c}: {fd} vs {}", g[k][c]);
            }
        }
    }

    #[test]
    fn tuned_vector_unpacks_with_fixed_speed_weight() {
        let space = tracking_space();
        assert_eq!(space.dim(), 19);
        let theta: Vec<f64> = (0..19).map(|i| if i < 6 { BicycleParams::TRUE.to_array()[i] } else { i as f64 }).collect();
        let (model, w) = unpack_tuned(&theta, 0.1).unwrap();
        assert_eq!(model, BicycleParams::TRUE);
        assert_eq!(w.stage, [6.0, 7.0, 8.0, STAGE_SPEED_WEIGHT, 9.0, 10.0]);
        assert_eq!(w.terminal, [11.0, 12.0, 13.0, 14.0, 15.0, 16.0]);
        assert_eq!(w.input, [17.0, 18.0]);
        assert_eq!(pack_tuned(&model, &w).0, theta);
    }
}
