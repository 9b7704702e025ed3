use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected value network with tanh hidden layers and a linear scalar head.
///
/// All weights and biases live in one flat vector; layer `l` occupies
/// `in_l * out_l` row-major weights followed by `out_l` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass.
struct Trace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    inputs: Vec<Array2<f64>>,
}

impl ValueNet {
    /// Hidden layers drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, output layer zero.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(obs_dim, hidden);
        let n_layers = net.sizes.len() - 1;
        for l in 0..n_layers - 1 {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            let range = net.layer_range(l);
            for p in &mut net.params[range] {
                *p = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes,
            params: vec![0.0; n],
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    pub fn obs_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.sizes[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum::<usize>()
    }

    fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(l);
        start..start + self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let range = self.layer_range(l);
        let block = &self.params[range];
        let w = ArrayView2::from_shape((fan_in, fan_out), &block[..fan_in * fan_out]).unwrap();
        let b = ArrayView1::from(&block[fan_in * fan_out..]);
        (w, b)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Trace {
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers + 1);
        inputs.push(x.to_owned());
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let mut z = inputs[l].dot(&w);
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(z);
        }
        Trace { inputs }
    }

    /// Values for a batch of observations (one per row).
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x.ncols())?;
        let trace = self.forward_trace(x);
        Ok(trace.inputs.last().unwrap().column(0).to_owned())
    }

    pub fn forward(&self, obs: &[f64]) -> Result<f64> {
        self.check_input(obs.len())?;
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        Ok(self.forward_trace(x).inputs.last().unwrap()[[0, 0]])
    }

    /// Mean of `0.5 * (V(s) - target)^2` and its exact gradient.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        targets: ArrayView1<'_, f64>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(x.ncols())?;
        let batch = x.nrows();
        if batch == 0 || targets.len() != batch {
            return Err(Error::DimensionMismatch {
                expected: batch.max(1),
                got: targets.len(),
            });
        }
        let trace = self.forward_trace(x);
        let n_layers = self.sizes.len() - 1;
        let out = trace.inputs[n_layers].column(0);
        let resid = &out - &targets;
        let loss = 0.5 * resid.mapv(|r| r * r).sum() / batch as f64;

        let mut grad = vec![0.0; self.params.len()];
        // dL/dz for the current layer's pre-activation
        let mut delta = (resid / batch as f64).insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            let range = self.layer_range(l);
            let a_in = &trace.inputs[l];
            let dw = a_in.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let block = &mut grad[range];
            for (g, d) in block.iter_mut().zip(dw.iter().chain(db.iter())) {
                *g = *d;
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut d_prev = delta.dot(&w.t());
                // a_in = tanh(z) for hidden layers
                d_prev.zip_mut_with(a_in, |d, &a| *d *= 1.0 - a * a);
                delta = d_prev;
            }
        }
        Ok((loss, grad))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trainer_rng;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = ValueNet::zeros(3, &[8, 8]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
        let mut rng = trainer_rng(0);
        let net = ValueNet::new(3, &[8, 8], &mut rng);
        // zero output layer
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = ValueNet::new(4, &[16, 16], &mut trainer_rng(7));
        let b = ValueNet::new(4, &[16, 16], &mut trainer_rng(7));
        assert_eq!(a, b);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // 1 -> 1 -> 1 : V = w2 * tanh(w1 * x + b1) + b2
        let net = ValueNet::from_parts(vec![1, 1, 1], vec![0.5, 0.1, 2.0, -0.3]).unwrap();
        let x: f64 = 0.8;
        let expected = 2.0 * (0.5 * x + 0.1).tanh() - 0.3;
        assert!((net.forward(&[x]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let net = ValueNet::zeros(3, &[4]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let mut rng = trainer_rng(3);
        let net = ValueNet::new(2, &[5, 5], &mut rng);
        let mut net = net;
        for p in net.params_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let x = array![[0.1, 0.2], [-0.3, 0.7]];
        let v = net.forward_batch(x.view()).unwrap();
        let (loss, g) = net.loss_and_grad(x.view(), v.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&gi| gi == 0.0));
    }

    #[test]
    fn output_layer_gradient_is_residual_times_features() {
        let mut rng = trainer_rng(4);
        let mut net = ValueNet::new(2, &[3], &mut rng);
        let n = net.num_params();
        net.params_mut()[n - 4..].copy_from_slice(&[0.2, -0.1, 0.4, 0.05]);
        let x = array![[0.5, -1.0]];
        let v = net.forward(&[0.5, -1.0]).unwrap();
        let target = 1.3;
        let (_, g) = net.loss_and_grad(x.view(), array![target].view()).unwrap();
        // hidden features
        let (w1, b1) = net.layer(0);
        let h: Vec<f64> = (0..3)
            .map(|j| (0.5 * w1[[0, j]] - 1.0 * w1[[1, j]] + b1[j]).tanh())
            .collect();
        for j in 0..3 {
            assert!((g[n - 4 + j] - (v - target) * h[j]).abs() < 1e-14);
        }
        assert!((g[n - 1] - (v - target)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = trainer_rng(11);
        let mut net = ValueNet::new(3, &[6, 5], &mut rng);
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x = Array2::from_shape_fn((7, 3), |_| rng.random_range(-2.0..2.0));
        let t = Array1::from_shape_fn(7, |_| rng.random_range(-1.0..1.0));
        let (_, g) = net.loss_and_grad(x.view(), t.view()).unwrap();
        let h = 1e-6;
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let lp = plus.loss_and_grad(x.view(), t.view()).unwrap().0;
            let lm = minus.loss_and_grad(x.view(), t.view()).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-5, "param {i}: fd {fd} vs bp {}", g[i]);
        }
    }
}
