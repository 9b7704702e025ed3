//! State-value critic: network, GAE targets and advantages, training loop.

mod gae;
mod net;
mod normalize;
mod train;

pub use gae::{segment_advantage, td_residual, value_targets, TrajectoryView};
pub use net::ValueNet;
pub use normalize::InputNormalizer;
pub use train::{full_loss, train_critic, CriticTrainConfig, LossTrace, ValueTargetSet};
