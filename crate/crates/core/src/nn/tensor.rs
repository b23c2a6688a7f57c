use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major array of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Entries drawn from U[-bound, bound].
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    /// `out = self · x` for a 2-D tensor.
    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        debug_assert_eq!(x.len(), cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · v` for a 2-D tensor.
    pub(crate) fn matvec_t_into(&self, v: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(cols)) {
            if vi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
    }

    /// `out += self[:, j]` summed over the listed columns `j`.
    pub(crate) fn add_columns_into(&self, columns: &[usize], out: &mut [f64]) {
        let cols = self.cols();
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(cols)) {
            let mut s = 0.0;
            for &j in columns {
                s += row[j];
            }
            *o += s;
        }
    }

    /// `self[:, j] += u` for each listed column `j`.
    pub(crate) fn add_to_columns(&mut self, u: &[f64], columns: &[usize]) {
        let cols = self.cols();
        for (&ui, row) in u.iter().zip(self.data.chunks_exact_mut(cols)) {
            if ui == 0.0 {
                continue;
            }
            for &j in columns {
                row[j] += ui;
            }
        }
    }

    /// `self += u · vᵀ` for a 2-D tensor.
    pub(crate) fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        let cols = self.cols();
        for (&ui, row) in u.iter().zip(self.data.chunks_exact_mut(cols)) {
            if ui == 0.0 {
                continue;
            }
            for (w, &vj) in row.iter_mut().zip(v) {
                *w += ui * vj;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums; the summation order is fixed
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn shape_checks() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        assert_eq!((t.rows(), t.cols(), t.len()), (2, 3, 6));
    }

    #[test]
    fn matvec_and_transpose() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = vec![0.0; 2];
        w.matvec_into(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
        let mut back = vec![0.0; 3];
        w.matvec_t_into(&[1.0, 1.0], &mut back);
        assert_eq!(back, vec![5.0, 7.0, 9.0]);
        let mut g = Tensor::zeros(&[2, 3]);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g.data(), &[1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert!(!Tensor::from_vec(&[1], vec![f64::NAN]).unwrap().is_finite());
        let mut sparse = vec![0.0; 2];
        w.add_columns_into(&[0, 2], &mut sparse);
        assert_eq!(sparse, vec![4.0, 10.0]);
        let mut g2 = Tensor::zeros(&[2, 3]);
        g2.add_to_columns(&[1.0, 2.0], &[0, 2]);
        assert_eq!(g2.data(), &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
    }
}
