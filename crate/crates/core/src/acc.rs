//! Adaptive cruise control: first-order-lag car-following plant under a
//! constant-time-headway spacing policy, tuned with an incremental PID.
//!
//! State `x = [dd, dv, a_f]`: clearance error, speed error (preceding minus
//! ego) and ego acceleration. Continuous dynamics `x' = A x + B u + D w` are
//! discretized exactly with a zero-order hold on `u` and `w`.

use nalgebra::{Matrix3, SMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Action, Controller, Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::param_space::{NativeVector, ParamSpace, ParamSpec};
use crate::rng::SimRng;

pub const OBS_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccPlantParams {
    pub gain: f64,
    pub time_constant: f64,
    pub headway: f64,
    pub standstill_distance: f64,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for AccPlantParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            time_constant: 0.45,
            headway: 2.5,
            standstill_distance: 5.0,
            dt: 0.1,
            u_min: -1.5,
            u_max: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccScenario {
    pub plant: AccPlantParams,
    pub max_episode_length: usize,
    pub penalty: f64,
    pub max_clearance_error: f64,
    pub max_speed_error: f64,
    /// Variance of the preceding vehicle's acceleration samples.
    pub disturbance_variance: f64,
    /// Steps between disturbance resamples.
    pub disturbance_hold: usize,
    pub init_clearance: f64,
    pub init_speed: f64,
}

impl Default for AccScenario {
    fn default() -> Self {
        Self {
            plant: AccPlantParams::default(),
            max_episode_length: 1000,
            penalty: 1000.0,
            max_clearance_error: 5.0,
            max_speed_error: 1.0,
            disturbance_variance: 0.05,
            disturbance_hold: 30,
            init_clearance: 1.0,
            init_speed: 0.3,
        }
    }
}

impl AccScenario {
    pub fn validate(&self) -> Result<()> {
        let p = &self.plant;
        if !(p.time_constant > 0.0 && p.dt > 0.0 && p.u_min < p.u_max) {
            return Err(Error::config("acc plant needs time_constant > 0, dt > 0, u_min < u_max"));
        }
        if self.max_episode_length == 0 || self.disturbance_hold == 0 {
            return Err(Error::config("acc episode length and disturbance hold must be positive"));
        }
        if self.disturbance_variance < 0.0 || self.init_clearance < 0.0 || self.init_speed < 0.0 {
            return Err(Error::config("acc scenario ranges must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccState {
    pub clearance_error: f64,
    pub speed_error: f64,
    pub accel: f64,
}

impl AccState {
    fn to_vec(self) -> Vector3<f64> {
        Vector3::new(self.clearance_error, self.speed_error, self.accel)
    }

    fn from_vec(v: Vector3<f64>) -> Self {
        Self {
            clearance_error: v[0],
            speed_error: v[1],
            accel: v[2],
        }
    }
}

/// Continuous-time system matrices `(A, B, D)`.
pub fn continuous_matrices(p: &AccPlantParams) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
    let a = Matrix3::new(
        0.0, 1.0, -p.headway, //
        0.0, 0.0, -1.0, //
        0.0, 0.0, -1.0 / p.time_constant,
    );
    let b = Vector3::new(0.0, 0.0, p.gain / p.time_constant);
    let d = Vector3::new(0.0, 1.0, 0.0);
    (a, b, d)
}

/// Zero-order-hold discretization of the car-following system.
#[derive(Debug, Clone, PartialEq)]
pub struct AccPlant {
    pub params: AccPlantParams,
    phi: Matrix3<f64>,
    gamma_u: Vector3<f64>,
    gamma_w: Vector3<f64>,
}

impl AccPlant {
    pub fn new(params: AccPlantParams) -> Self {
        let (a, b, d) = continuous_matrices(&params);
        // exp([[A, B, D], [0, 0, 0], [0, 0, 0]] dt) = [[Phi, Gu, Gw], [0, I]]
        let mut aug = SMatrix::<f64, 5, 5>::zeros();
        aug.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
        aug.fixed_view_mut::<3, 1>(0, 3).copy_from(&b);
        aug.fixed_view_mut::<3, 1>(0, 4).copy_from(&d);
        let e = (aug * params.dt).exp();
        Self {
            params,
            phi: e.fixed_view::<3, 3>(0, 0).into_owned(),
            gamma_u: e.fixed_view::<3, 1>(0, 3).into_owned(),
            gamma_w: e.fixed_view::<3, 1>(0, 4).into_owned(),
        }
    }

    /// Advances one `dt` with `u` and `w` held constant.
    pub fn step(&self, x: AccState, u: f64, w: f64) -> AccState {
        AccState::from_vec(self.phi * x.to_vec() + self.gamma_u * u + self.gamma_w * w)
    }

    pub fn clamp_input(&self, u: f64) -> f64 {
        u.clamp(self.params.u_min, self.params.u_max)
    }
}

/// Piecewise-constant preceding-vehicle acceleration.
#[derive(Debug, Clone)]
pub struct Disturbance {
    normal: Normal<f64>,
    hold: usize,
    current: f64,
    rng: SimRng,
}

impl Disturbance {
    pub fn new(variance: f64, hold: usize, seed: u64) -> Self {
        Self {
            normal: Normal::new(0.0, variance.sqrt()).expect("finite variance"),
            hold,
            current: 0.0,
            rng: SimRng::seed_from_u64(seed),
        }
    }

    /// Value applied during step `t`; resampled whenever `t` is a multiple of the hold.
    pub fn at(&mut self, t: usize) -> f64 {
        if t % self.hold == 0 {
            self.current = self.normal.sample(&mut self.rng);
        }
        self.current
    }
}

/// Tuned gains: `e = k*dd + dv`, incremental PID on `e`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidParams {
    pub k: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidParams {
    pub fn from_native(theta: &NativeVector) -> Result<Self> {
        match theta.as_slice() {
            &[k, kp, ki, kd] => Ok(Self { k, kp, ki, kd }),
            other => Err(Error::DimensionMismatch {
                expected: 4,
                got: other.len(),
            }),
        }
    }

    pub fn error_signal(&self, x: &AccState) -> f64 {
        self.k * x.clearance_error + x.speed_error
    }

    /// `Kp (e_t - e_{t-1}) + Ki e_t + Kd (e_t - 2 e_{t-1} + e_{t-2})`.
    pub fn increment(&self, e: f64, e_prev: f64, e_prev2: f64) -> f64 {
        self.kp * (e - e_prev) + self.ki * e + self.kd * (e - 2.0 * e_prev + e_prev2)
    }
}

/// One incremental PID update followed by input saturation.
pub fn pid_act(pid: &PidParams, errors: [f64; 3], u_prev: f64, u_min: f64, u_max: f64) -> f64 {
    let [e, e_prev, e_prev2] = errors;
    (u_prev + pid.increment(e, e_prev, e_prev2)).clamp(u_min, u_max)
}

/// Instantaneous driving cost for desired acceleration `u` and jerk `u_dot`.
pub fn acc_cost(x: &AccState, u: f64, u_dot: f64) -> f64 {
    let dv = x.speed_error;
    let dd = x.clearance_error;
    let af = x.accel;
    0.1 * dv * dv
        + 0.06 * dd * dd
        + u * u
        + 0.1 * u_dot * u_dot
        + 0.5 * (0.25 * dv + 0.02 * dd - af).powi(2)
}

/// `[k, Kp, Ki, Kd]` each in `[0, 10]`, linearly mapped.
pub fn pid_space() -> ParamSpace {
    ParamSpace::new(
        ["k", "kp", "ki", "kd"]
            .into_iter()
            .map(|n| ParamSpec::linear(n, 0.0, 10.0))
            .collect(),
    )
    .expect("static space")
}

/// Car-following environment. The action is the input increment `du`;
/// the applied input is `clamp(u_{t-1} + du)`.
#[derive(Debug, Clone)]
pub struct AccEnv {
    scenario: AccScenario,
    plant: AccPlant,
    disturbance: Disturbance,
    /// `history[0]` is the current state, then one and two steps back.
    history: [AccState; 3],
    u_prev: f64,
    t: usize,
    tracing: bool,
}

impl AccEnv {
    pub fn new(scenario: AccScenario) -> Result<Self> {
        scenario.validate()?;
        let plant = AccPlant::new(scenario.plant.clone());
        let disturbance = Disturbance::new(scenario.disturbance_variance, scenario.disturbance_hold, 0);
        Ok(Self {
            scenario,
            plant,
            disturbance,
            history: [AccState::default(); 3],
            u_prev: 0.0,
            t: 0,
            tracing: false,
        })
    }

    pub fn scenario(&self) -> &AccScenario {
        &self.scenario
    }

    pub fn state(&self) -> AccState {
        self.history[0]
    }

    fn observation(&self) -> Observation {
        let mut obs = Vec::with_capacity(OBS_DIM);
        for x in &self.history {
            obs.extend_from_slice(&[x.clearance_error, x.speed_error, x.accel]);
        }
        obs.push(self.u_prev);
        Observation(obs)
    }

    /// Starts an episode from an explicit state (history filled with it).
    pub fn reset_to(&mut self, x0: AccState, disturbance_seed: u64) -> Observation {
        self.history = [x0; 3];
        self.u_prev = 0.0;
        self.t = 0;
        self.disturbance = Disturbance::new(
            self.scenario.disturbance_variance,
            self.scenario.disturbance_hold,
            disturbance_seed,
        );
        self.observation()
    }
}

/// Splits an ACC observation into the three most recent states and `u_{t-1}`.
pub fn unpack_observation(obs: &[f64]) -> Result<([AccState; 3], f64)> {
    if obs.len() != OBS_DIM {
        return Err(Error::DimensionMismatch {
            expected: OBS_DIM,
            got: obs.len(),
        });
    }
    let st = |i: usize| AccState {
        clearance_error: obs[3 * i],
        speed_error: obs[3 * i + 1],
        accel: obs[3 * i + 2],
    };
    Ok(([st(0), st(1), st(2)], obs[9]))
}

impl Environment for AccEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn max_episode_length(&self) -> usize {
        self.scenario.max_episode_length
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = SimRng::seed_from_u64(seed);
        let dd = self.scenario.init_clearance;
        let dv = self.scenario.init_speed;
        let x0 = AccState {
            clearance_error: if dd > 0.0 { rng.random_range(-dd..dd) } else { 0.0 },
            speed_error: if dv > 0.0 { rng.random_range(-dv..dv) } else { 0.0 },
            accel: 0.0,
        };
        let disturbance_seed = rng.random();
        self.reset_to(x0, disturbance_seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let du = *action.values.first().ok_or(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        })?;
        let x = self.history[0];
        let u = self.plant.clamp_input(self.u_prev + du);
        let u_dot = (u - self.u_prev) / self.scenario.plant.dt;
        let w = self.disturbance.at(self.t);
        let mut cost = acc_cost(&x, u, u_dot);
        let next = self.plant.step(x, u, w);
        self.history = [next, self.history[0], self.history[1]];
        self.u_prev = u;
        self.t += 1;

        let terminated = next.clearance_error.abs() > self.scenario.max_clearance_error
            || next.speed_error.abs() > self.scenario.max_speed_error;
        if terminated {
            cost += self.scenario.penalty;
        }
        let truncated = !terminated && self.t >= self.scenario.max_episode_length;
        let info = if self.tracing {
            vec![
                ("t", (self.t - 1) as f64 * self.scenario.plant.dt),
                ("dd", x.clearance_error),
                ("dv", x.speed_error),
                ("af", x.accel),
                ("u", u),
                ("w", w),
            ]
        } else {
            Vec::new()
        };
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

/// Incremental PID acting on the augmented observation.
#[derive(Debug, Clone)]
pub struct PidController {
    params: PidParams,
    u_min: f64,
    u_max: f64,
}

impl PidController {
    pub fn new(plant: &AccPlantParams) -> Self {
        Self {
            params: PidParams::default(),
            u_min: plant.u_min,
            u_max: plant.u_max,
        }
    }

    pub fn params(&self) -> PidParams {
        self.params
    }
}

impl Controller for PidController {
    fn set_params(&mut self, theta: &NativeVector) -> Result<()> {
        self.params = PidParams::from_native(theta)?;
        Ok(())
    }

    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let (states, u_prev) = unpack_observation(obs.as_slice())?;
        let errors = states.map(|x| self.params.error_signal(&x));
        let u = pid_act(&self.params, errors, u_prev, self.u_min, self.u_max);
        Ok(Action::new(vec![u - u_prev]))
    }
}
