//! Adam on flat parameter vectors, shared by the critic and the actor.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self::with_betas(dim, 0.9, 0.999)
    }

    pub fn with_betas(dim: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected step for the given gradient, without applying it.
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + self.eps)
            })
            .collect()
    }

    /// `params -= lr * adam(grad)`.
    pub fn descend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for (p, d) in params.iter_mut().zip(self.direction(grad)) {
            *p -= lr * d;
        }
    }

    /// `params += lr * adam(grad)`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for (p, d) in params.iter_mut().zip(self.direction(grad)) {
            *p += lr * d;
        }
    }
}
