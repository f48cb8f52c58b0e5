//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{QacnnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let first: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            second: first.clone(),
            first,
            step: 0,
        }
    }
}

/// One Adam update of every tensor in `params` using the matching `grads`.
pub fn adam_step<T: Real>(
    params: Vec<&mut Tensor<T>>,
    grads: Vec<&Tensor<T>>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(QacnnError::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                state.first.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(QacnnError::shape(
                "adam_step",
                format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let c1 = T::of(1.0 - config.beta1.powi(t));
    let c2 = T::of(1.0 - config.beta2.powi(t));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    let one = T::one();
    for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut theta = Tensor::vector(vec![0.5f64, -2.0]);
        let g = Tensor::vector(vec![3.0, -0.01]);
        let mut state = AdamState::new([&theta]);
        adam_step(vec![&mut theta], vec![&g], &mut state, &cfg).unwrap();
        // m̂ = g and v̂ = g², so the step is lr · g / (|g| + ε)
        let expect0 = 0.5 - 1e-3 * 3.0 / (3.0 + 1e-8);
        let expect1 = -2.0 + 1e-3 * 0.01 / (0.01 + 1e-8);
        assert!((theta.data()[0] - expect0).abs() < 1e-15);
        assert!((theta.data()[1] - expect1).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut theta = Tensor::vector(vec![1.0f64]);
        let mut state = AdamState::new([&theta]);
        adam_step(vec![&mut theta], vec![&Tensor::vector(vec![2.0])], &mut state, &cfg).unwrap();
        let before = theta.clone();
        let (m, v) = (state.first[0].data()[0], state.second[0].data()[0]);
        let zero = Tensor::vector(vec![0.0]);
        let mut frozen = before.clone();
        let mut s2 = state.clone();
        s2.first[0] = Tensor::vector(vec![0.0]);
        s2.second[0] = Tensor::vector(vec![0.0]);
        adam_step(vec![&mut frozen], vec![&zero], &mut s2, &cfg).unwrap();
        assert_eq!(frozen, before);
        adam_step(vec![&mut theta], vec![&zero], &mut state, &cfg).unwrap();
        assert!((state.first[0].data()[0] - 0.9 * m).abs() < 1e-15);
        assert!((state.second[0].data()[0] - 0.999 * v).abs() < 1e-15);
    }

    #[test]
    fn two_steps_on_square() {
        // f(θ) = θ², θ₀ = 1, computed by hand:
        // step 1: g=2, m=0.2, v=0.004, m̂=2, v̂=4, θ=1−0.001·2/(2+1e−8)
        // step 2: g=2θ₁, m=0.9·0.2+0.1g, v=0.999·0.004+0.001g², bias 1−0.9², 1−0.999²
        let cfg = AdamConfig::default();
        let mut theta = Tensor::vector(vec![1.0f64]);
        let mut state = AdamState::new([&theta]);
        for _ in 0..2 {
            let g = theta.map(|x| 2.0 * x);
            adam_step(vec![&mut theta], vec![&g], &mut state, &cfg).unwrap();
        }
        let t1 = 1.0 - 0.001 * 2.0 / (2.0 + 1e-8);
        let g2 = 2.0 * t1;
        let m2 = 0.9 * 0.2 + 0.1 * g2;
        let v2 = 0.999 * 0.004 + 0.001 * g2 * g2;
        let t2 = t1 - 0.001 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64 * 0.999)).sqrt() + 1e-8);
        assert!((theta.data()[0] - t2).abs() < 1e-14, "{} vs {t2}", theta.data()[0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut theta = Tensor::vector(vec![1.0f64, 2.0]);
        let mut state = AdamState::new([&theta]);
        let g = Tensor::vector(vec![1.0]);
        assert!(adam_step(vec![&mut theta], vec![&g], &mut state, &AdamConfig::default()).is_err());
    }
}
