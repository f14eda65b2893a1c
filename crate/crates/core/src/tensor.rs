//! Dense row-major tensors over `f64`.
//!
//! Every kernel runs a fixed sequential loop order, so results are
//! bit-identical across runs and across call sites. Rank 0 is a scalar,
//! rank 1 a vector, rank 2 a matrix; nothing here needs more.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                node: "tensor".into(),
                detail: format!("shape {shape:?} wants {expected} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() needs a matrix");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() needs a matrix");
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "scalar_value() needs one element");
        self.data[0]
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rank(), 2);
        assert_eq!(other.rank(), 2);
        assert_eq!(self.cols(), other.rows(), "matmul inner dims");
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor { shape: vec![m, n], data: out }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    /// 1 where the entry is strictly positive, else 0. The value at exactly
    /// zero is 0, matching the chosen relu subgradient.
    pub fn relu_mask(&self) -> Tensor {
        self.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn sqrt(&self) -> Tensor {
        self.map(f64::sqrt)
    }

    pub fn recip(&self) -> Tensor {
        self.map(|v| 1.0 / v)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&self) -> Tensor {
        assert_eq!(self.rank(), 2);
        let (n, k) = (self.rows(), self.cols());
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            let row = &self.data[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            for (o, &v) in out[i * k..(i + 1) * k].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        Tensor { shape: vec![n, k], data: out }
    }

    /// Sum of all entries, sequential in storage order.
    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    /// Collapse rows: `[n, h] -> [1, h]`.
    pub fn sum_rows(&self) -> Tensor {
        assert_eq!(self.rank(), 2);
        let (n, h) = (self.rows(), self.cols());
        let mut out = vec![0.0; h];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(&self.data[i * h..(i + 1) * h]) {
                *o += v;
            }
        }
        Tensor { shape: vec![1, h], data: out }
    }

    /// Collapse columns: `[n, k] -> [n, 1]`.
    pub fn sum_cols(&self) -> Tensor {
        assert_eq!(self.rank(), 2);
        let (n, k) = (self.rows(), self.cols());
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for &v in &self.data[i * k..(i + 1) * k] {
                acc += v;
            }
            out[i] = acc;
        }
        Tensor { shape: vec![n, 1], data: out }
    }

    /// Repeat a `[1, h]` row `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Tensor {
        assert_eq!(self.rank(), 2);
        assert_eq!(self.rows(), 1);
        let h = self.cols();
        let mut data = Vec::with_capacity(n * h);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Tensor { shape: vec![n, h], data }
    }

    /// Repeat a `[n, 1]` column `k` times.
    pub fn broadcast_cols(&self, k: usize) -> Tensor {
        assert_eq!(self.rank(), 2);
        assert_eq!(self.cols(), 1);
        let n = self.rows();
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            for _ in 0..k {
                data.push(self.data[i]);
            }
        }
        Tensor { shape: vec![n, k], data }
    }

    pub fn transpose(&self) -> Tensor {
        assert_eq!(self.rank(), 2);
        let (m, n) = (self.rows(), self.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor { shape: vec![n, m], data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_of_ones_gives_row_sums() {
        let a = Tensor::filled(vec![2, 3], 1.0);
        let b = Tensor::filled(vec![3, 2], 1.0);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[2, 2]);
        assert!(c.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn relu_and_mask_at_zero() {
        let x = Tensor::vector(vec![-1.0, 0.0, 3.0]);
        assert_eq!(x.relu().data(), &[0.0, 0.0, 3.0]);
        assert_eq!(x.relu_mask().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn log_softmax_normalizes() {
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 1000.0, 1000.0, 1000.0]).unwrap();
        let ls = x.log_softmax();
        for i in 0..2 {
            let total: f64 = ls.row(i).iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // max subtraction keeps large logits finite
        assert!(ls.is_finite());
        assert!((ls.row(1)[0] - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn transpose_round_trip() {
        let x = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(x.transpose().transpose(), x);
    }

    #[test]
    fn reductions_and_broadcasts_are_duals() {
        let x = Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(x.sum_rows().data(), &[9.0, 12.0]);
        assert_eq!(x.sum_cols().data(), &[3.0, 7.0, 11.0]);
        let r = Tensor::matrix(1, 2, vec![7.0, 8.0]).unwrap();
        assert_eq!(r.broadcast_rows(2).data(), &[7.0, 8.0, 7.0, 8.0]);
        let c = Tensor::matrix(2, 1, vec![7.0, 8.0]).unwrap();
        assert_eq!(c.broadcast_cols(2).data(), &[7.0, 7.0, 8.0, 8.0]);
    }
}
