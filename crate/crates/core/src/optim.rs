//! Adam with bias correction.

use gasp_autodiff::nn::ParamStore;
use gasp_autodiff::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::new(1e-3, 0.9, 0.999)
    }
}

/// Moment accumulators for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| p.map(|_| 0.0)).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::dim(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::dim(format!(
                "adam: parameter {i} has shape {:?} but gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - config.beta1.powi(t);
    let correction2 = 1.0 - config.beta2.powi(t);
    let (b1, b2) = (config.beta1, config.beta2);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.first[i].data_mut();
        for (m, g) in m.iter_mut().zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
        }
        let v = state.second[i].data_mut();
        for (v, g) in v.iter_mut().zip(g) {
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let (m, v) = (state.first[i].data(), state.second[i].data());
        for ((p, m), v) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = m / correction1;
            let v_hat = v / correction2;
            *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Adam bound to a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        Self {
            config,
            state: AdamState::zeros_like(params.tensors()),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        adam_step(params.tensors_mut(), grads, &mut self.state, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::vector(&[1.0, -2.0])];
        let grads = vec![Tensor::vector(&[1.0, 1.0])];
        let mut state = AdamState::zeros_like(&params);
        let config = AdamConfig::new(0.01, 0.5, 0.999);
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let step = 0.01 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - (1.0 - step)).abs() < 1e-15);
        assert!((params[0].data()[1] - (-2.0 - step)).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![Tensor::vector(&[0.3, 0.7])];
        let grads = vec![Tensor::vector(&[0.0, 0.0])];
        let mut state = AdamState::zeros_like(&params);
        for _ in 0..50 {
            adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params[0].data(), &[0.3, 0.7]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::vector(&[0.0, 0.0])];
        let grads = vec![Tensor::vector(&[0.0])];
        let mut state = AdamState::zeros_like(&params);
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state, &AdamConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn trajectories_are_bitwise_reproducible() {
        let run = || {
            let mut params = vec![Tensor::vector(&[0.5, -0.25, 2.0])];
            let mut state = AdamState::zeros_like(&params);
            for step in 0..20 {
                let g: Vec<f64> = params[0].data().iter().map(|p| p.sin() * step as f64).collect();
                adam_step(&mut params, &[Tensor::vector(&g)], &mut state, &AdamConfig::default()).unwrap();
            }
            params.remove(0)
        };
        assert!(run().bit_eq(&run()));
    }
}
