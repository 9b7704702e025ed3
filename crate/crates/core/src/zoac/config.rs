use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_space::{MappedVector, ParamSpace};
use crate::rng::SimRng;
use rand::Rng;

/// Starting point of the actor in the mapped cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// The origin of the cube.
    Center,
    /// Uniform over the cube, drawn from the trainer stream.
    Random,
    /// A fixed mapped point.
    Mapped(Vec<f64>),
}

impl InitMode {
    pub fn initial_point(&self, space: &ParamSpace, rng: &mut SimRng) -> Result<MappedVector> {
        let d = space.dim();
        match self {
            InitMode::Center => Ok(MappedVector::zeros(d)),
            InitMode::Random => Ok(MappedVector((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())),
            InitMode::Mapped(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    });
                }
                let m = MappedVector(v.clone());
                if !m.in_cube() {
                    return Err(Error::config(format!("initial point {v:?} is outside [-1, 1]^{d}")));
                }
                Ok(m)
            }
        }
    }
}

/// Linear interpolation from `start` at iteration 0 to `end` at the last iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
}

impl LinearSchedule {
    pub fn at(&self, iteration: usize, total: usize) -> f64 {
        if total == 0 {
            return self.start;
        }
        let frac = (iteration.min(total)) as f64 / total as f64;
        self.start * (1.0 - frac) + self.end * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoacConfig {
    /// Parallel workers `n`.
    pub workers: usize,
    /// Segments per worker per iteration `H`.
    pub segments: usize,
    /// Steps per segment `N`.
    pub segment_length: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub critic_epochs: usize,
    pub critic_batch: usize,
    pub critic_lr: f64,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: LinearSchedule,
    pub iterations: usize,
    pub seed: u64,
    pub standardize_advantages: bool,
    pub init: InitMode,
    /// Evaluate the unperturbed controller every this many iterations (and after the last).
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for ZoacConfig {
    fn default() -> Self {
        Self {
            workers: 10,
            segments: 4,
            segment_length: 10,
            sigma: 0.08,
            gamma: 0.99,
            lambda: 0.95,
            critic_epochs: 10,
            critic_batch: 128,
            critic_lr: 5e-4,
            critic_hidden: vec![256, 256],
            actor_lr: LinearSchedule { start: 3e-2, end: 1e-2 },
            iterations: 300,
            seed: 0,
            standardize_advantages: false,
            init: InitMode::Random,
            eval_every: 10,
            eval_episodes: 10,
            eval_seed: 12_345,
        }
    }
}

impl ZoacConfig {
    pub fn acc() -> Self {
        Self::default()
    }

    pub fn tracking() -> Self {
        Self {
            segments: 5,
            segment_length: 20,
            sigma: 0.1,
            actor_lr: LinearSchedule { start: 5e-2, end: 1e-2 },
            iterations: 500,
            init: InitMode::Center,
            eval_episodes: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("workers", self.workers),
            ("segments", self.segments),
            ("segment_length", self.segment_length),
            ("critic_batch", self.critic_batch),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("zoac.{name} must be at least 1")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("zoac.sigma must be positive, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("zoac.gamma must be in (0, 1), got {}", self.gamma)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config(format!("zoac.lambda must be in (0, 1), got {}", self.lambda)));
        }
        if !(self.critic_lr > 0.0) || !(self.actor_lr.start >= 0.0) || !(self.actor_lr.end >= 0.0) {
            return Err(Error::config("zoac learning rates must be non-negative (critic positive)"));
        }
        if self.critic_hidden.contains(&0) {
            return Err(Error::config("zoac.critic_hidden sizes must be positive"));
        }
        Ok(())
    }

    /// Env steps charged per iteration.
    pub fn steps_per_iteration(&self) -> u64 {
        (self.workers * self.segments * self.segment_length) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LinearSchedule { start: 3e-2, end: 1e-2 };
        assert_eq!(s.at(0, 300), 3e-2);
        assert_eq!(s.at(300, 300), 1e-2);
        assert!((s.at(150, 300) - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn guards() {
        assert!(ZoacConfig::default().validate().is_ok());
        assert!(ZoacConfig::tracking().validate().is_ok());
        for bad in [
            ZoacConfig { sigma: 0.0, ..Default::default() },
            ZoacConfig { gamma: 1.0, ..Default::default() },
            ZoacConfig { lambda: 0.0, ..Default::default() },
            ZoacConfig { workers: 0, ..Default::default() },
        ] {
            assert!(bad.validate().unwrap_err().is_config());
        }
    }

    #[test]
    fn acc_budget() {
        assert_eq!(ZoacConfig::acc().steps_per_iteration(), 400);
    }
}
