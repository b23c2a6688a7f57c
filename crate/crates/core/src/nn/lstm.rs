use rand::Rng;

use super::{check_len, Parameters, Tensor};
use crate::error::Result;

/// Single-layer LSTM cell.
///
/// Gate rows are stacked as `[input, forget, candidate, output]`, each block
/// `hidden_size` rows tall:
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
/// g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
/// c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `(4H × I)`
    pub input_weights: Tensor,
    /// `(4H × H)`
    pub recurrent_weights: Tensor,
    /// `(4H)`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
enum CachedInput {
    Dense(Vec<f64>),
    /// Indices of the entries equal to one; all others are zero.
    OneHot(Vec<usize>),
}

/// Values saved by [`LstmCell::step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    x: CachedInput,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmCell {
    /// Uniform init with `k = 1/sqrt(input + hidden)`; forget-gate bias set to 1.
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let k = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        let mut cell = LstmCell {
            input_weights: Tensor::uniform(&[4 * hidden_size, input_size], k, rng),
            recurrent_weights: Tensor::uniform(&[4 * hidden_size, hidden_size], k, rng),
            bias: Tensor::uniform(&[4 * hidden_size], k, rng),
        };
        cell.bias.data_mut()[hidden_size..2 * hidden_size].fill(1.0);
        cell
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmCell {
            input_weights: Tensor::zeros(&[4 * hidden_size, input_size]),
            recurrent_weights: Tensor::zeros(&[4 * hidden_size, hidden_size]),
            bias: Tensor::zeros(&[4 * hidden_size]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size())
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.cols()
    }

    fn check_state(&self, h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
        check_len("lstm hidden state", h_prev.len(), self.hidden_size())?;
        check_len("lstm cell state", c_prev.len(), self.hidden_size())
    }

    /// One recurrence step. Returns `(h_t, c_t, cache)`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
        check_len("lstm input", x.len(), self.input_size())?;
        self.check_state(h_prev, c_prev)?;
        let mut pre = self.bias.data().to_vec();
        self.input_weights.matvec_into(x, &mut pre);
        Ok(self.finish_step(pre, CachedInput::Dense(x.to_vec()), h_prev, c_prev))
    }

    /// [`step`](Self::step) for an input that is one at `active` and zero
    /// elsewhere. Gives the same result as the dense call.
    pub fn step_one_hot(&self, active: &[usize], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
        if let Some(&j) = active.iter().find(|&&j| j >= self.input_size()) {
            return Err(crate::Error::Dimension(format!(
                "lstm one-hot index {j} out of range for input size {}",
                self.input_size()
            )));
        }
        self.check_state(h_prev, c_prev)?;
        let mut pre = self.bias.data().to_vec();
        self.input_weights.add_columns_into(active, &mut pre);
        Ok(self.finish_step(pre, CachedInput::OneHot(active.to_vec()), h_prev, c_prev))
    }

    fn finish_step(&self, mut pre: Vec<f64>, x: CachedInput, h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmCache) {
        let hs = self.hidden_size();
        self.recurrent_weights.matvec_into(h_prev, &mut pre);
        let i: Vec<f64> = pre[..hs].iter().map(|&z| sigmoid(z)).collect();
        let f: Vec<f64> = pre[hs..2 * hs].iter().map(|&z| sigmoid(z)).collect();
        let g: Vec<f64> = pre[2 * hs..3 * hs].iter().map(|&z| z.tanh()).collect();
        let o: Vec<f64> = pre[3 * hs..].iter().map(|&z| sigmoid(z)).collect();
        let c: Vec<f64> = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hs).map(|k| o[k] * tanh_c[k]).collect();
        let cache = LstmCache {
            x,
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (h, c, cache)
    }

    /// Backpropagates one step given gradients on `(h_t, c_t)`. Parameter
    /// gradients are accumulated into `grads`; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (dpre, dh_prev, dc_prev) = self.backward_core(cache, dh, dc, grads)?;
        let mut dx = vec![0.0; self.input_size()];
        self.input_weights.matvec_t_into(&dpre, &mut dx);
        Ok((dx, dh_prev, dc_prev))
    }

    /// [`step_backward`](Self::step_backward) without the input gradient.
    pub fn step_backward_state(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, dh_prev, dc_prev) = self.backward_core(cache, dh, dc, grads)?;
        Ok((dh_prev, dc_prev))
    }

    fn backward_core(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hs = self.hidden_size();
        check_len("lstm dh", dh.len(), hs)?;
        check_len("lstm dc", dc.len(), hs)?;
        let mut dpre = vec![0.0; 4 * hs];
        let mut dc_prev = vec![0.0; hs];
        for k in 0..hs {
            let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dpre[k] = dc_total * g * i * (1.0 - i);
            dpre[hs + k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
            dpre[2 * hs + k] = dc_total * i * (1.0 - g * g);
            dpre[3 * hs + k] = dh[k] * tc * o * (1.0 - o);
            dc_prev[k] = dc_total * f;
        }
        match &cache.x {
            CachedInput::Dense(x) => grads.input_weights.add_outer(&dpre, x),
            CachedInput::OneHot(active) => grads.input_weights.add_to_columns(&dpre, active),
        }
        grads.recurrent_weights.add_outer(&dpre, &cache.h_prev);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&dpre) {
            *b += d;
        }
        let mut dh_prev = vec![0.0; hs];
        self.recurrent_weights.matvec_t_into(&dpre, &mut dh_prev);
        Ok((dpre, dh_prev, dc_prev))
    }
}

impl Parameters for LstmCell {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("input_weights".into(), &self.input_weights),
            ("recurrent_weights".into(), &self.recurrent_weights),
            ("bias".into(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.input_weights, &mut self.recurrent_weights, &mut self.bias]
    }
}
