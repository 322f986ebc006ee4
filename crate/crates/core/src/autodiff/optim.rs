use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape_numel: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; shape_numel],
            v: vec![0.0; shape_numel],
            t: 0,
            config,
        }
    }

    pub fn for_param(param: &Tensor, config: AdamConfig) -> Self {
        Self::new(param.numel(), config)
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
) -> Result<(), AutodiffError> {
    if param.shape() != grad.shape() {
        return Err(AutodiffError::Shape(format!(
            "adam_step: parameter {:?} vs gradient {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    if state.m.len() != param.numel() || state.v.len() != param.numel() {
        return Err(AutodiffError::Shape(format!(
            "adam_step: optimizer state holds {} moments for {} parameters",
            state.m.len(),
            param.numel()
        )));
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - (beta1 as f64).powi(state.t as i32);
    let bc2 = 1.0 - (beta2 as f64).powi(state.t as i32);
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m as f64 / bc1;
        let v_hat = *v as f64 / bc2;
        *p -= (lr as f64 * m_hat / (v_hat.sqrt() + eps as f64)) as f32;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f32) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let mut p = Tensor::from_vec(vec![0.5, -1.0]);
        let g = Tensor::zeros(&[2]);
        let mut s = AdamState::for_param(&p, cfg(1e-3));
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.data(), &[0.5, -1.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let mut p = Tensor::from_vec(vec![0.0]);
        let g = Tensor::from_vec(vec![1.0]);
        let mut s = AdamState::for_param(&p, cfg(1e-3));
        adam_step(&mut p, &g, &mut s).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] as f64 - expected).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_step_is_bounded_by_lr() {
        let lr = 1e-3;
        let mut p = Tensor::from_vec(vec![0.3, -0.7, 2.0]);
        let g = Tensor::from_vec(vec![0.5, -3.0, 1e-3]);
        let mut s = AdamState::for_param(&p, cfg(lr));
        for step in 1..=2u64 {
            let before = p.clone();
            adam_step(&mut p, &g, &mut s).unwrap();
            assert_eq!(s.t, step);
            for (a, b) in before.data().iter().zip(p.data()) {
                assert!((a - b).abs() <= lr * (1.0 + 1e-3));
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut s = AdamState::for_param(&p, cfg(1e-3));
        assert!(adam_step(&mut p, &g, &mut s).is_err());
        assert_eq!(s.t, 0);
    }
}
