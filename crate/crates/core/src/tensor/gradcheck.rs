//! Central finite differences, the reference every analytic gradient is
//! checked against.

use super::Tensor;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every element of `x`.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad).expect("same shape as x")
}

/// Largest per-element relative error between two gradients. Elements whose
/// analytic magnitude is below `1e-8` are compared absolutely.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if a.abs() < 1e-8 {
                diff
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
