//! Seeded random streams.
//!
//! Every run derives its randomness from one master seed. Workers get their own
//! ChaCha stream (same key, different stream id) so collection is reproducible
//! no matter how workers are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream 0 is reserved for the trainer (critic init, minibatch shuffling).
pub fn trainer_rng(seed: u64) -> SimRng {
    stream(seed, 0)
}

pub fn worker_rng(seed: u64, worker: usize) -> SimRng {
    stream(seed, worker as u64 + 1)
}

pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Seeds used for deterministic evaluation episodes.
pub fn eval_seeds(base: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64)
        .map(|i| base.wrapping_mul(1_000_003).wrapping_add(i))
        .collect()
}
