//! Value targets and segment advantages from exponentially weighted TD residuals.
//!
//! Rewards are passed in reward convention (`-cost`). A trajectory is a flat
//! sequence of steps with per-step boundary flags:
//!
//! * `terminated[t]`: `s_{t+1}` is terminal, its value is taken as 0 and the
//!   residual chain stops.
//! * `truncated[t]`: the episode was cut by its length limit; `s_{t+1}` is
//!   bootstrapped with the critic and the chain stops.
//!
//! The last step of a trajectory is always bootstrapped unless terminated.

/// One-step residual `r + gamma * V(s') - V(s)` with `V(s') = 0` when terminal.
#[inline]
pub fn td_residual(reward: f64, value: f64, next_value: f64, terminated: bool, gamma: f64) -> f64 {
    let next = if terminated { 0.0 } else { next_value };
    reward + gamma * next - value
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryView<'a> {
    pub rewards: &'a [f64],
    pub values: &'a [f64],
    pub next_values: &'a [f64],
    pub terminated: &'a [bool],
    pub truncated: &'a [bool],
}

impl TrajectoryView<'_> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn check(&self) {
        let n = self.rewards.len();
        assert!(
            self.values.len() == n
                && self.next_values.len() == n
                && self.terminated.len() == n
                && self.truncated.len() == n,
            "trajectory arrays must have equal length"
        );
    }
}

/// Per-step targets `G_t = V(s_t) + sum_k (gamma*lambda)^k delta_{t+k}` computed
/// by a backward recursion that restarts at every episode boundary.
pub fn value_targets(traj: TrajectoryView<'_>, gamma: f64, lambda: f64) -> Vec<f64> {
    traj.check();
    let n = traj.len();
    let mut targets = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let boundary = traj.terminated[t] || traj.truncated[t];
        if boundary {
            acc = 0.0;
        }
        let delta = td_residual(
            traj.rewards[t],
            traj.values[t],
            traj.next_values[t],
            traj.terminated[t],
            gamma,
        );
        acc = delta + gamma * lambda * acc;
        targets[t] = traj.values[t] + acc;
    }
    targets
}

/// Advantage of one segment: `sum_{k<len} (gamma*lambda)^k delta_k`.
///
/// The segment must not contain an episode boundary before its last step.
pub fn segment_advantage(traj: TrajectoryView<'_>, gamma: f64, lambda: f64) -> f64 {
    traj.check();
    let mut acc = 0.0;
    for t in (0..traj.len()).rev() {
        let delta = td_residual(
            traj.rewards[t],
            traj.values[t],
            traj.next_values[t],
            traj.terminated[t],
            gamma,
        );
        acc = delta + gamma * lambda * acc;
    }
    acc
}
