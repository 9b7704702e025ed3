//! Numerical check of the parameter-noise policy gradient on a two-state MDP
//! where the behaviour value function can be computed exactly.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::SimRng;

/// Nodes and weights of Gauss-Hermite quadrature for the standard normal density.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Two states, scalar action `a = gain[s] * theta`, reward `-scale * (a - target[s])^2`,
/// next state 1 with probability `sigmoid(a + bias[s])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMdp {
    pub gamma: f64,
    pub start: [f64; 2],
    pub gain: [f64; 2],
    pub target: [f64; 2],
    pub bias: [f64; 2],
    pub reward_scale: f64,
}

impl Default for ToyMdp {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            start: [1.0, 0.0],
            gain: [1.0, -0.5],
            target: [0.5, -0.3],
            bias: [0.0, 0.5],
            reward_scale: 1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ToyMdp {
    pub fn action(&self, s: usize, theta: f64) -> f64 {
        self.gain[s] * theta
    }

    pub fn reward(&self, s: usize, a: f64) -> f64 {
        -self.reward_scale * (a - self.target[s]).powi(2)
    }

    pub fn prob_next_one(&self, s: usize, a: f64) -> f64 {
        sigmoid(a + self.bias[s])
    }

    pub fn q_value(&self, s: usize, a: f64, v: &[f64; 2]) -> f64 {
        let p = self.prob_next_one(s, a);
        self.reward(s, a) + self.gamma * (p * v[1] + (1.0 - p) * v[0])
    }

    /// Exact values of the behaviour policy (fresh parameter noise every step).
    pub fn behaviour_values(&self, theta: f64, sigma: f64) -> [f64; 2] {
        let (nodes, weights) = gauss_hermite(48);
        let mut r = Vector2::zeros();
        let mut p = Matrix2::zeros();
        for s in 0..2 {
            for (x, w) in nodes.iter().zip(&weights) {
                let a = self.action(s, theta + sigma * x);
                let p1 = self.prob_next_one(s, a);
                r[s] += w * self.reward(s, a);
                p[(s, 1)] += w * p1;
                p[(s, 0)] += w * (1.0 - p1);
            }
        }
        let v = (Matrix2::identity() - self.gamma * p)
            .lu()
            .solve(&r)
            .expect("I - gamma P is invertible for gamma < 1");
        [v[0], v[1]]
    }

    /// Smoothed objective `J(theta) = sum_s d0(s) V_beta(s)`.
    pub fn smoothed_objective(&self, theta: f64, sigma: f64) -> f64 {
        let v = self.behaviour_values(theta, sigma);
        self.start[0] * v[0] + self.start[1] * v[1]
    }

    fn sample_start(&self, rng: &mut SimRng) -> usize {
        usize::from(rng.random::<f64>() >= self.start[0])
    }

    fn next_state(&self, s: usize, a: f64, u: f64) -> usize {
        usize::from(u < self.prob_next_one(s, a))
    }
}

/// Sample mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            half_width: 1.96 * (var / n).sqrt(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (v - self.mean).abs() <= self.half_width
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        (self.mean - other.mean).abs() <= self.half_width + other.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Monte-Carlo estimate of `(1/sigma) E_{s~d_beta} E_eps [Q_beta(s, pi_{theta+sigma eps}(s)) eps]`.
    pub policy_gradient: Estimate,
    /// Central difference of Monte-Carlo returns with common random numbers.
    pub finite_difference: Estimate,
    /// Central difference of the exactly computed smoothed objective.
    pub exact: f64,
}

/// Compares the parameter-noise policy gradient against finite differences.
///
/// States are drawn from the normalised discounted visitation distribution by
/// running the behaviour policy for a geometric number of steps, so the
/// estimate is scaled by `1 / (1 - gamma)`.
pub fn mc_policy_gradient_check(
    mdp: &ToyMdp,
    theta: f64,
    sigma: f64,
    samples: usize,
    fd_step: f64,
    rng: &mut SimRng,
) -> GradientCheck {
    let gamma = mdp.gamma;
    let v = mdp.behaviour_values(theta, sigma);
    let pg: Vec<f64> = (0..samples)
        .map(|_| {
            let mut s = mdp.sample_start(rng);
            while rng.random::<f64>() < gamma {
                let e: f64 = rng.sample(StandardNormal);
                let a = mdp.action(s, theta + sigma * e);
                s = mdp.next_state(s, a, rng.random());
            }
            let e: f64 = rng.sample(StandardNormal);
            let q = mdp.q_value(s, mdp.action(s, theta + sigma * e), &v);
            q * e / ((1.0 - gamma) * sigma)
        })
        .collect();

    let horizon = (1e-12f64.ln() / gamma.ln()).ceil() as usize;
    let mut eps = vec![0.0; horizon];
    let mut unif = vec![0.0; horizon];
    let ret = |th: f64, s0: usize, eps: &[f64], unif: &[f64]| {
        let mut s = s0;
        let mut total = 0.0;
        let mut disc = 1.0;
        for (e, u) in eps.iter().zip(unif) {
            let a = mdp.action(s, th + sigma * e);
            total += disc * mdp.reward(s, a);
            disc *= gamma;
            s = mdp.next_state(s, a, *u);
        }
        total
    };
    let fd: Vec<f64> = (0..samples)
        .map(|_| {
            let s0 = mdp.sample_start(rng);
            for k in 0..horizon {
                eps[k] = rng.sample(StandardNormal);
                unif[k] = rng.random();
            }
            (ret(theta + fd_step, s0, &eps, &unif) - ret(theta - fd_step, s0, &eps, &unif)) / (2.0 * fd_step)
        })
        .collect();

    let h = 1e-5;
    let exact = (mdp.smoothed_objective(theta + h, sigma) - mdp.smoothed_objective(theta - h, sigma)) / (2.0 * h);
    GradientCheck {
        policy_gradient: Estimate::from_samples(&pg),
        finite_difference: Estimate::from_samples(&fd),
        exact,
    }
}
