//! Ready-made tuning tasks.

use crate::acc::{pid_space, AccEnv, AccScenario, PidController};
use crate::env::{Controller, Environment};
use crate::error::{Error, Result};
use crate::param_space::{NativeVector, ParamSpace};
use crate::toy::{ParamEcho, QuadraticBandit};
use crate::tracking::{pack_tuned, tracking_space, BicycleParams, MpcController, MpcWeights, SolverConfig, TrackingEnv, TrackingScenario};
use crate::zoac::Task;

/// PID gains of the car-following controller.
#[derive(Debug, Clone, Default)]
pub struct AccTask {
    pub scenario: AccScenario,
}

impl Task for AccTask {
    fn name(&self) -> &str {
        "acc-pid"
    }

    fn space(&self) -> ParamSpace {
        pid_space()
    }

    fn make_env(&self) -> Result<Box<dyn Environment>> {
        Ok(Box::new(AccEnv::new(self.scenario.clone())?))
    }

    fn make_controller(&self) -> Result<Box<dyn Controller>> {
        Ok(Box::new(PidController::new(&self.scenario.plant)))
    }
}

/// Model parameters and weights of the tracking MPC.
#[derive(Debug, Clone)]
pub struct TrackingTask {
    pub scenario: TrackingScenario,
    pub solver: SolverConfig,
}

impl TrackingTask {
    pub fn new(scenario: TrackingScenario, solver: SolverConfig) -> Result<Self> {
        if scenario.horizon != solver.horizon {
            return Err(Error::config(format!(
                "observation horizon {} differs from MPC horizon {}",
                scenario.horizon, solver.horizon
            )));
        }
        scenario.validate()?;
        solver.validate()?;
        Ok(Self { scenario, solver })
    }

    /// Default scenario with the given horizon and optional model-mismatch weight.
    pub fn with_horizon(horizon: usize, regularization: Option<f64>) -> Self {
        Self {
            scenario: TrackingScenario {
                horizon,
                regularization,
                ..Default::default()
            },
            solver: SolverConfig {
                horizon,
                ..Default::default()
            },
        }
    }

    /// Native parameter vector of the nominal controller.
    pub fn nominal_theta(&self) -> NativeVector {
        let model = BicycleParams {
            ts: self.scenario.plant.ts,
            ..BicycleParams::TRUE
        };
        pack_tuned(&model, &MpcWeights::nominal())
    }

    /// The true-model, hand-weighted controller.
    pub fn nominal_controller(&self) -> Result<MpcController> {
        MpcController::nominal(self.solver.clone(), self.scenario.plant.ts)
    }
}

impl Task for TrackingTask {
    fn name(&self) -> &str {
        if self.scenario.regularization.is_some() {
            "tracking-mpc-reg"
        } else {
            "tracking-mpc"
        }
    }

    fn space(&self) -> ParamSpace {
        tracking_space()
    }

    fn make_env(&self) -> Result<Box<dyn Environment>> {
        Ok(Box::new(TrackingEnv::new(self.scenario.clone())?))
    }

    fn make_controller(&self) -> Result<Box<dyn Controller>> {
        let model = BicycleParams {
            ts: self.scenario.plant.ts,
            ..BicycleParams::TRUE
        };
        Ok(Box::new(MpcController::new(self.solver.clone(), model, MpcWeights::nominal())?))
    }
}

/// One-step bandit whose cost is the squared distance of the parameters to `target`.
#[derive(Debug, Clone)]
pub struct BanditTask {
    pub target: Vec<f64>,
}

impl Task for BanditTask {
    fn name(&self) -> &str {
        "toy-quadratic"
    }

    fn space(&self) -> ParamSpace {
        QuadraticBandit::new(self.target.clone()).space()
    }

    fn make_env(&self) -> Result<Box<dyn Environment>> {
        Ok(Box::new(QuadraticBandit::new(self.target.clone())))
    }

    fn make_controller(&self) -> Result<Box<dyn Controller>> {
        Ok(Box::<ParamEcho>::default())
    }
}
