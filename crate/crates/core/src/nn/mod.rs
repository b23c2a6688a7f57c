//! Small f64 neural-network toolkit with hand-written gradients.
//!
//! Models own their parameters as [`Tensor`]s and expose them through
//! [`Parameters`] in a fixed declaration order. Gradients are accumulated into
//! a zeroed copy of the same model type, so optimizer state, checkpoints and
//! gradient checks all walk parameters in the same order.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use dense::{Activation, DenseCache, DenseLayer};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, FD_STEP};
pub use loss::{log_softmax, softmax, softmax_cross_entropy};
pub use lstm::{LstmCache, LstmCell};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Ordered access to a model's trainable tensors.
pub trait Parameters {
    /// Tensors with stable names, in declaration order.
    fn named_tensors(&self) -> Vec<(String, &Tensor)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameter values concatenated in declaration order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.tensors_mut().iter().map(|t| t.len()).sum();
        if total != values.len() {
            return Err(Error::Dimension(format!("expected {total} parameter values, got {}", values.len())));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.add_assign(src);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Writes every named tensor into a checkpoint container.
    fn export_tensors(&self, ckpt: &mut Checkpoint) {
        for (name, t) in self.named_tensors() {
            ckpt.tensors.push((name, t.clone()));
        }
    }

    /// Loads tensors by name; names and shapes must match exactly.
    fn import_tensors(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != ckpt.tensors.len() {
            return Err(Error::format(
                "checkpoint",
                format!("expected {} tensors, found {}", names.len(), ckpt.tensors.len()),
            ));
        }
        for ((name, shape), (ck_name, ck_tensor)) in names.iter().zip(&ckpt.tensors) {
            if name != ck_name || shape.as_slice() != ck_tensor.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!(
                        "tensor {ck_name} {:?} does not match expected {name} {shape:?}",
                        ck_tensor.shape()
                    ),
                ));
            }
        }
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(&ckpt.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, inner: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    inner.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}
