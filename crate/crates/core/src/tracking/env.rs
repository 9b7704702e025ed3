use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::bicycle::{bicycle_step, BicycleParams, State, OMEGA, PHI, U, V, X, Y};
use super::reference::{generate_reference, ReferenceConfig, ReferenceTrajectory};
use crate::env::{Action, Environment, Observation, StepResult, PREDICTION_ERROR};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Task cost: tracking error plus effort.
pub fn tracking_cost(s: &State, r: &State, delta: f64, a: f64) -> f64 {
    let du = s[U] - r[U];
    let dy = s[Y] - r[Y];
    let dphi = s[PHI] - r[PHI];
    du * du + 4.0 * dy * dy + 10.0 * dphi * dphi + 2.0 * s[OMEGA] * s[OMEGA] + 500.0 * delta * delta + 5.0 * a * a
}

/// Squared one-step model mismatch.
pub fn squared_prediction_error(forecast: &[f64], next: &State) -> f64 {
    forecast.iter().zip(next).map(|(f, x)| (f - x) * (f - x)).sum()
}

/// `r + zeta/2 * |F(X_t, U_t) - X_{t+1}|^2`.
pub fn regularized_cost(r: f64, forecast: &[f64], next: &State, zeta: f64) -> f64 {
    r + 0.5 * zeta * squared_prediction_error(forecast, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingScenario {
    pub reference: ReferenceConfig,
    /// Number of reference states in the observation (the MPC horizon).
    pub horizon: usize,
    pub max_episode_length: usize,
    pub penalty: f64,
    pub max_lateral_error: f64,
    pub max_heading_error: f64,
    pub max_speed_error: f64,
    pub min_speed: f64,
    pub init_lateral: f64,
    pub init_heading: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    /// Weight of the model-mismatch term added to the cost; `None` disables it.
    pub regularization: Option<f64>,
    pub plant: BicycleParams,
}

impl Default for TrackingScenario {
    fn default() -> Self {
        Self {
            reference: ReferenceConfig::default(),
            horizon: 25,
            max_episode_length: 200,
            penalty: 1000.0,
            max_lateral_error: 4.0,
            max_heading_error: std::f64::consts::FRAC_PI_4,
            max_speed_error: 4.0,
            min_speed: 0.5,
            init_lateral: 0.5,
            init_heading: 0.05,
            max_steer: 2.0 * std::f64::consts::PI / 15.0,
            max_accel: 3.0,
            regularization: None,
            plant: BicycleParams::TRUE,
        }
    }
}

impl TrackingScenario {
    pub fn validate(&self) -> Result<()> {
        self.reference.validate()?;
        if self.horizon == 0 || self.max_episode_length == 0 {
            return Err(Error::config("tracking horizon and episode length must be positive"));
        }
        if let Some(z) = self.regularization {
            if !(z >= 0.0 && z.is_finite()) {
                return Err(Error::config("tracking.regularization must be non-negative"));
            }
        }
        if !(self.init_lateral >= 0.0 && self.init_heading >= 0.0) {
            return Err(Error::config("initial perturbation ranges must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrackingEnv {
    scenario: TrackingScenario,
    reference: Option<ReferenceTrajectory>,
    state: State,
    t: usize,
    tracing: bool,
}

impl TrackingEnv {
    pub fn new(scenario: TrackingScenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            scenario,
            reference: None,
            state: [0.0; 6],
            t: 0,
            tracing: false,
        })
    }

    pub fn scenario(&self) -> &TrackingScenario {
        &self.scenario
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn reference(&self) -> Option<&ReferenceTrajectory> {
        self.reference.as_ref()
    }

    fn observation(&self) -> Observation {
        let r = self.reference.as_ref().expect("reset before use");
        let mut obs = Vec::with_capacity(6 * (self.scenario.horizon + 1));
        obs.extend_from_slice(&self.state);
        for k in 1..=self.scenario.horizon {
            obs.extend_from_slice(r.at(self.t + k));
        }
        Observation(obs)
    }

    fn violates(&self, s: &State, r: &State) -> bool {
        let sc = &self.scenario;
        !s.iter().all(|x| x.is_finite())
            || (s[Y] - r[Y]).abs() > sc.max_lateral_error
            || (s[PHI] - r[PHI]).abs() > sc.max_heading_error
            || (s[U] - r[U]).abs() > sc.max_speed_error
            || s[U] < sc.min_speed
    }
}

impl Environment for TrackingEnv {
    fn obs_dim(&self) -> usize {
        6 * (self.scenario.horizon + 1)
    }

    fn max_episode_length(&self) -> usize {
        self.scenario.max_episode_length
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = SimRng::seed_from_u64(seed);
        let ref_seed: u64 = rng.random();
        let points = self.scenario.max_episode_length + self.scenario.horizon + 1;
        let reference = generate_reference(&self.scenario.reference, ref_seed, points, self.scenario.plant.ts)
            .expect("validated reference config");
        let r0 = reference.states[0];
        let jitter = |rng: &mut SimRng, w: f64| if w > 0.0 { rng.random_range(-w..w) } else { 0.0 };
        let mut s = r0;
        s[Y] += jitter(&mut rng, self.scenario.init_lateral);
        s[PHI] += jitter(&mut rng, self.scenario.init_heading);
        s[V] = 0.0;
        self.state = s;
        self.reference = Some(reference);
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let (delta, a) = match action.values.as_slice() {
            &[d, a] => (d.clamp(-self.scenario.max_steer, self.scenario.max_steer), a.clamp(-self.scenario.max_accel, self.scenario.max_accel)),
            other => {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got: other.len(),
                })
            }
        };
        let reference = self.reference.as_ref().expect("reset before step");
        let r_t = *reference.at(self.t);
        let r_next = *reference.at(self.t + 1);
        let stage = tracking_cost(&self.state, &r_t, delta, a);
        let mut cost = stage;
        let (next, singular) = match bicycle_step(&self.state, &[delta, a], &self.scenario.plant) {
            Ok(n) => (n, false),
            Err(Error::Singular(_)) => (self.state, true),
            Err(e) => return Err(e),
        };
        let pred_err = action.forecast.as_ref().map(|f| squared_prediction_error(f, &next));
        if let (Some(e), Some(z)) = (pred_err, self.scenario.regularization) {
            cost += 0.5 * z * e;
        }
        let prev = self.state;
        self.state = next;
        self.t += 1;
        let terminated = singular || self.violates(&next, &r_next);
        if terminated {
            cost += self.scenario.penalty;
        }
        let truncated = !terminated && self.t >= self.scenario.max_episode_length;

        let mut info = Vec::new();
        if let Some(e) = pred_err {
            info.push((PREDICTION_ERROR, e));
        }
        if action.fallback {
            info.push(("fallback", 1.0));
        }
        if self.tracing {
            let t = (self.t - 1) as f64 * self.scenario.plant.ts;
            info.extend([
                ("t", t),
                ("x", prev[X]),
                ("y", prev[Y]),
                ("phi", prev[PHI]),
                ("u", prev[U]),
                ("v", prev[V]),
                ("omega", prev[OMEGA]),
                ("x_ref", r_t[X]),
                ("y_ref", r_t[Y]),
                ("phi_ref", r_t[PHI]),
                ("u_ref", r_t[U]),
                ("v_ref", r_t[V]),
                ("omega_ref", r_t[OMEGA]),
                ("delta", delta),
                ("a", a),
                ("stage_cost", stage),
            ]);
        }
        Ok(StepResult {
            next_obs: self.observation(),
            cost,
            terminated,
            truncated,
            info,
        })
    }

    fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{evaluate, Controller};
    use crate::param_space::NativeVector;
    use crate::tracking::mpc::{MpcController, SolverConfig};
    use crate::tracking::reference::ProfileKind;

    #[test]
    fn cost_examples() {
        let s = [0.0, 0.0, 0.0, 10.0, 0.0, 0.0];
        assert_eq!(tracking_cost(&s, &s, 0.0, 0.0), 0.0);
        assert!((tracking_cost(&s, &s, 0.1, 0.0) - 5.0).abs() < 1e-12);
        let mut off = s;
        off[Y] = 0.5;
        assert_eq!(tracking_cost(&off, &s, 0.0, 0.0), 1.0);
    }

    #[test]
    fn regularizer_examples() {
        let next = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(regularized_cost(3.0, &next, &next, 50.0), 3.0);
        let mut f = next.to_vec();
        f[0] += 1.0;
        assert_eq!(regularized_cost(3.0, &f, &next, 50.0), 28.0);
    }

    fn scenario(horizon: usize) -> TrackingScenario {
        TrackingScenario {
            horizon,
            ..Default::default()
        }
    }

    #[test]
    fn observation_layout() {
        let mut env = TrackingEnv::new(scenario(4)).unwrap();
        let obs = env.reset(9);
        assert_eq!(obs.0.len(), 30);
        assert_eq!(&obs.0[..6], env.state());
        let r = env.reference().unwrap();
        assert_eq!(&obs.0[6..12], r.at(1));
        assert_eq!(&obs.0[24..30], r.at(4));
    }

    #[test]
    fn large_lateral_offset_terminates_once_with_penalty() {
        let mut env = TrackingEnv::new(TrackingScenario {
            reference: ReferenceConfig {
                profile: ProfileKind::Straight,
                ..Default::default()
            },
            init_lateral: 0.0,
            init_heading: 0.0,
            horizon: 2,
            ..Default::default()
        })
        .unwrap();
        env.reset(0);
        env.state[Y] = 3.99;
        env.state[PHI] = 0.3;
        let r = env.step(&Action::new(vec![0.0, 0.0])).unwrap();
        assert!(r.terminated);
        assert!(r.cost > 1000.0);
    }

    #[test]
    fn nominal_controller_has_zero_prediction_error_and_tracks() {
        let sc = scenario(10);
        let mut env = TrackingEnv::new(sc.clone()).unwrap();
        let mut ctrl = MpcController::nominal(
            SolverConfig {
                horizon: 10,
                ..Default::default()
            },
            sc.plant.ts,
        )
        .unwrap();
        let mut theta = ctrl.model().to_array().to_vec();
        let w = *ctrl.weights();
        theta.extend_from_slice(&[w.stage[0], w.stage[1], w.stage[2], w.stage[4], w.stage[5]]);
        theta.extend_from_slice(&w.terminal);
        theta.extend_from_slice(&w.input);
        ctrl.set_params(&NativeVector(theta.clone())).unwrap();
        let report = evaluate(&mut env, &mut ctrl, &NativeVector(theta), 2, 77).unwrap();
        assert_eq!(report.terminated_episodes, 0);
        assert_eq!(report.mean_prediction_error, Some(0.0));
        assert!(report.mean_cost.is_finite() && report.mean_cost < 200.0, "{}", report.mean_cost);
    }
}
