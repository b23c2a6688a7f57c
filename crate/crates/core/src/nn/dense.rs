use rand::Rng;

use super::{check_len, Parameters, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    output: Vec<f64>,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl DenseLayer {
    /// Weights and bias drawn from U[-k, k] with `k = 1/sqrt(inputs)`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let k = 1.0 / (inputs as f64).sqrt();
        DenseLayer {
            weights: Tensor::uniform(&[outputs, inputs], k, rng),
            bias: Tensor::uniform(&[outputs], k, rng),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs(), self.activation)
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        check_len("dense input", input.len(), self.inputs())?;
        let mut pre = self.bias.data().to_vec();
        self.weights.matvec_into(input, &mut pre);
        let output: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        let cache = DenseCache {
            input: input.to_vec(),
            pre,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", input.len(), self.inputs())?;
        let mut pre = self.bias.data().to_vec();
        self.weights.matvec_into(input, &mut pre);
        for z in &mut pre {
            *z = self.activation.apply(*z);
        }
        Ok(pre)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&self, cache: &DenseCache, upstream: &[f64], grads: &mut DenseLayer) -> Result<Vec<f64>> {
        check_len("dense upstream gradient", upstream.len(), self.outputs())?;
        let delta: Vec<f64> = upstream
            .iter()
            .zip(cache.pre.iter().zip(&cache.output))
            .map(|(&g, (&z, &y))| g * self.activation.derivative(z, y))
            .collect();
        grads.weights.add_outer(&delta, &cache.input);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&delta) {
            *b += d;
        }
        let mut input_grad = vec![0.0; self.inputs()];
        self.weights.matvec_t_into(&delta, &mut input_grad);
        Ok(input_grad)
    }
}

impl Parameters for DenseLayer {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("weights".into(), &self.weights), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            layer.weights.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 3.0];
        assert_eq!(layer.forward(&x).unwrap().0, x.to_vec());
    }

    #[test]
    fn affine_backward_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = DenseLayer::new(3, 2, Activation::Identity, &mut rng);
        let x = [1.0, -0.5, 2.0];
        let (_, cache) = layer.forward(&x).unwrap();
        let mut grads = layer.zeros_like();
        let dx = layer.backward(&cache, &[1.0, 1.0], &mut grads).unwrap();
        let w = layer.weights.data();
        for j in 0..3 {
            assert!((dx[j] - (w[j] + w[3 + j])).abs() < 1e-15);
        }
        for r in 0..2 {
            for (j, &xj) in x.iter().enumerate() {
                assert_eq!(grads.weights.data()[r * 3 + j], xj);
            }
        }
        assert_eq!(grads.bias.data(), &[1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let layer = DenseLayer::zeros(3, 2, Activation::Tanh);
        assert!(layer.forward(&[1.0]).is_err());
        let (_, cache) = layer.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(layer.backward(&cache, &[1.0], &mut layer.zeros_like()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Tanh, Activation::Identity, Activation::Relu] {
            let layer = DenseLayer::new(5, 4, act, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coeff: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |p: &[f64]| {
                let mut l = layer.clone();
                l.assign_flat(p).unwrap();
                let (y, cache) = l.forward(&x).unwrap();
                let value: f64 = y.iter().zip(&coeff).map(|(a, b)| a * b).sum();
                let mut g = l.zeros_like();
                l.backward(&cache, &coeff, &mut g).unwrap();
                (value, g.flatten())
            };
            let report = gradient_check(f, &layer.flatten(), FD_STEP, 1e-6);
            assert!(report.passed, "{act:?}: {report:?}");
        }
    }
}
