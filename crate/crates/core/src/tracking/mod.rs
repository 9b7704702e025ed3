//! Vehicle trajectory tracking with a receding-horizon controller.

pub mod bicycle;
pub mod env;
pub mod mpc;
pub mod reference;

pub use bicycle::{bicycle_step, bicycle_step_jacobian, BicycleParams, Input, State};
pub use env::{regularized_cost, squared_prediction_error, tracking_cost, TrackingEnv, TrackingScenario};
pub use mpc::{mpc_solve, pack_tuned, tracking_space, unpack_tuned, MpcController, MpcProblem, MpcSolution, MpcWeights, SolverConfig};
pub use reference::{generate_reference, ProfileKind, ReferenceConfig, ReferenceTrajectory};
