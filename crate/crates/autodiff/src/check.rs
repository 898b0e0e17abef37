//! Finite-difference gradient checking.
//!
//! These helpers only evaluate the function being checked, never its
//! recorded graph, so they serve as an independent oracle for
//! [`Graph::backward`](crate::Graph::backward).

use crate::tensor::Tensor;

/// Default central-difference step for `f64` checks.
pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of a scalar function of several
/// tensors.
pub fn numeric_gradient(f: impl Fn(&[Tensor]) -> f64, inputs: &[Tensor], step: f64) -> Vec<Tensor> {
    let mut probe: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut grad = vec![0.0; inputs[t].len()];
        for (i, slot) in grad.iter_mut().enumerate() {
            let original = inputs[t].data()[i];
            probe[t].data_mut()[i] = original + step;
            let up = f(&probe);
            probe[t].data_mut()[i] = original - step;
            let down = f(&probe);
            probe[t].data_mut()[i] = original;
            *slot = (up - down) / (2.0 * step);
        }
        grads.push(Tensor::from_parts(inputs[t].shape().to_vec(), grad));
    }
    grads
}

/// Largest elementwise deviation, scaled by the larger of 1 and the largest
/// reference magnitude.
pub fn relative_error(actual: &Tensor, reference: &Tensor) -> f64 {
    assert_eq!(actual.shape(), reference.shape(), "shape mismatch in gradient check");
    let scale = reference
        .data()
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let worst = actual
        .data()
        .iter()
        .zip(reference.data())
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
    worst / scale
}

/// Worst [`relative_error`] over matched lists of tensors.
pub fn max_relative_error(actual: &[Tensor], reference: &[Tensor]) -> f64 {
    assert_eq!(actual.len(), reference.len());
    actual
        .iter()
        .zip(reference)
        .map(|(a, r)| relative_error(a, r))
        .fold(0.0, f64::max)
}
