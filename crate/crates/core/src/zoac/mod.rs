//! Zeroth-order actor-critic tuning and the episodic ES baseline.

mod config;
mod es;
mod theory;
mod trainer;

pub use config::{InitMode, LinearSchedule, ZoacConfig};
pub use es::{es_baseline, es_gradient, smoothed_gradient, EsConfig};
pub use theory::{gauss_hermite, mc_policy_gradient_check, Estimate, GradientCheck, ToyMdp};
pub use trainer::{
    actor_gradient, collect_iteration, estimate_advantages, observation_matrix, tune, update_actor, ActorState,
    Collection, IterationStats, Task, TuneResult, Worker,
};
