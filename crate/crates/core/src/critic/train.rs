use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use crate::adam::Adam;
use crate::error::{Diagnostics, Error, Result};
use crate::rng::SimRng;

use super::ValueNet;

/// States with their value targets, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTargetSet {
    pub states: Array2<f64>,
    pub targets: Array1<f64>,
}

impl ValueTargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticTrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
}

impl Default for CriticTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            minibatch: 128,
            lr: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    /// Loss of every minibatch before its update.
    pub batches: Vec<f64>,
    /// Mean minibatch loss per epoch.
    pub epochs: Vec<f64>,
}

/// `epochs` passes of shuffled minibatch Adam steps on the mean squared error.
pub fn train_critic(
    net: &mut ValueNet,
    adam: &mut Adam,
    data: &ValueTargetSet,
    cfg: &CriticTrainConfig,
    rng: &mut SimRng,
) -> Result<LossTrace> {
    if data.is_empty() {
        return Err(Error::config("critic training needs at least one target"));
    }
    if cfg.minibatch == 0 {
        return Err(Error::config("minibatch size must be positive"));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = LossTrace::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.minibatch) {
            let x = data.states.select(ndarray::Axis(0), chunk);
            let t = data.targets.select(ndarray::Axis(0), chunk);
            let (loss, grad) = net.loss_and_grad(x.view(), t.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(Diagnostics::new(
                    "critic",
                    format!("loss {loss} in epoch {epoch}"),
                )));
            }
            adam.descend(net.params_mut(), &grad, cfg.lr);
            trace.batches.push(loss);
            epoch_sum += loss;
            batches += 1;
        }
        trace.epochs.push(epoch_sum / batches as f64);
    }
    Ok(trace)
}

/// Mean loss over the whole set.
pub fn full_loss(net: &ValueNet, data: &ValueTargetSet) -> Result<f64> {
    let v = net.forward_batch(data.states.view())?;
    Ok(0.5 * (&v - &data.targets).mapv(|r| r * r).mean().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trainer_rng;
    use rand::Rng;

    fn linear_targets(n: usize, seed: u64) -> ValueTargetSet {
        let mut rng = trainer_rng(seed);
        let states = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let targets = states.column(0).mapv(|a| 0.5 * a) - &states.column(1).mapv(|b| 0.25 * b);
        ValueTargetSet { states, targets }
    }

    #[test]
    fn zero_targets_stay_at_zero_loss() {
        let mut rng = trainer_rng(0);
        let mut net = ValueNet::zeros(2, &[8, 8]);
        let mut adam = Adam::new(net.num_params());
        let data = ValueTargetSet {
            states: Array2::from_shape_fn((20, 2), |(i, j)| (i + j) as f64 * 0.1),
            targets: Array1::zeros(20),
        };
        let trace = train_critic(&mut net, &mut adam, &data, &CriticTrainConfig::default(), &mut rng).unwrap();
        assert!(trace.batches.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn small_set_is_one_batch_per_epoch() {
        let mut rng = trainer_rng(1);
        let mut net = ValueNet::new(2, &[8, 8], &mut rng);
        let mut adam = Adam::new(net.num_params());
        let data = linear_targets(50, 2);
        let cfg = CriticTrainConfig {
            epochs: 3,
            minibatch: 128,
            lr: 1e-3,
        };
        let trace = train_critic(&mut net, &mut adam, &data, &cfg, &mut rng).unwrap();
        assert_eq!(trace.batches.len(), 3);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn loss_decreases_on_realizable_targets() {
        let mut rng = trainer_rng(3);
        let mut net = ValueNet::new(2, &[16, 16], &mut rng);
        let mut adam = Adam::new(net.num_params());
        let data = linear_targets(64, 4);
        let cfg = CriticTrainConfig {
            epochs: 1,
            minibatch: 64,
            lr: 1e-3,
        };
        let mut last = full_loss(&net, &data).unwrap();
        for _ in 0..20 {
            train_critic(&mut net, &mut adam, &data, &cfg, &mut rng).unwrap();
            let now = full_loss(&net, &data).unwrap();
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
    }

    #[test]
    fn epoch_loss_never_increases_for_small_lr() {
        for seed in 0..5 {
            let mut rng = trainer_rng(seed);
            let mut net = ValueNet::new(2, &[16, 16], &mut rng);
            let mut adam = Adam::new(net.num_params());
            let data = linear_targets(256, seed + 10);
            let cfg = CriticTrainConfig {
                epochs: 1,
                minibatch: 32,
                lr: 1e-4,
            };
            let mut last = full_loss(&net, &data).unwrap();
            for _ in 0..10 {
                train_critic(&mut net, &mut adam, &data, &cfg, &mut rng).unwrap();
                let now = full_loss(&net, &data).unwrap();
                assert!(now <= last * (1.0 + 1e-9) + 1e-12);
                last = now;
            }
        }
    }

    #[test]
    fn empty_targets_rejected() {
        let mut rng = trainer_rng(0);
        let mut net = ValueNet::zeros(2, &[4]);
        let mut adam = Adam::new(net.num_params());
        let data = ValueTargetSet {
            states: Array2::zeros((0, 2)),
            targets: Array1::zeros(0),
        };
        assert!(train_critic(&mut net, &mut adam, &data, &CriticTrainConfig::default(), &mut rng).is_err());
    }
}
