//! One-step quadratic bandit: the action is the parameter vector itself and
//! the cost is its squared distance to a fixed target.

use crate::env::{Action, Controller, Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::param_space::{NativeVector, ParamSpace, ParamSpec};

#[derive(Debug, Clone)]
pub struct QuadraticBandit {
    target: Vec<f64>,
}

impl QuadraticBandit {
    pub fn new(target: Vec<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Linear `[-1, 1]` per coordinate, so mapped and native spaces coincide.
    pub fn space(&self) -> ParamSpace {
        ParamSpace::new(
            (0..self.target.len())
                .map(|i| ParamSpec::linear(format!("x{i}"), -1.0, 1.0))
                .collect(),
        )
        .expect("non-empty target")
    }
}

impl Environment for QuadraticBandit {
    fn obs_dim(&self) -> usize {
        1
    }

    fn max_episode_length(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        Observation(vec![1.0])
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if action.values.len() != self.target.len() {
            return Err(Error::DimensionMismatch {
                expected: self.target.len(),
                got: action.values.len(),
            });
        }
        let cost = action
            .values
            .iter()
            .zip(&self.target)
            .map(|(a, c)| (a - c).powi(2))
            .sum();
        Ok(StepResult {
            next_obs: Observation(vec![1.0]),
            cost,
            terminated: true,
            truncated: false,
            info: Vec::new(),
        })
    }
}

/// Emits its parameters as the action.
#[derive(Debug, Clone, Default)]
pub struct ParamEcho {
    theta: Vec<f64>,
}

impl Controller for ParamEcho {
    fn set_params(&mut self, theta: &NativeVector) -> Result<()> {
        self.theta = theta.0.clone();
        Ok(())
    }

    fn reset(&mut self) {}

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::new(self.theta.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::evaluate;

    #[test]
    fn cost_is_squared_distance() {
        let mut env = QuadraticBandit::new(vec![0.3]);
        let r = evaluate(&mut env, &mut ParamEcho::default(), &NativeVector(vec![0.5]), 3, 0).unwrap();
        assert!((r.mean_cost - 0.04).abs() < 1e-15);
        assert_eq!(r.mean_length, 1.0);
    }
}
