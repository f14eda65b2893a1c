//! Central finite differences — the independent gradient oracle.
//!
//! Deliberately knows nothing about expression graphs: it probes an opaque
//! scalar function, so it stays a valid cross-check for any gradient path.

use crate::error::Result;
use crate::tensor::Tensor;

/// Central-difference estimate of the gradient of `f` at `x`:
/// `(f(x + h e_i) - f(x - h e_i)) / (2h)` per coordinate.
pub fn finite_difference<F>(f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    assert!(h > 0.0, "step must be positive");
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Largest per-coordinate relative deviation between two tensors, with an
/// absolute floor so near-zero coordinates compare absolutely.
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_of_squares() {
        let f = |t: &Tensor| Ok(t.data().iter().map(|v| v * v).sum());
        let x = Tensor::vector(vec![1.0, 2.0]);
        let g = finite_difference(f, &x, 1e-6).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = |_: &Tensor| Ok(4.25);
        let x = Tensor::vector(vec![0.3, -0.7, 0.0]);
        let g = finite_difference(f, &x, 1e-6).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
