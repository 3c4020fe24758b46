//! Adam with bias correction.

use crate::tensor::Tensor;
use crate::AutogradError;

/// Adam hyperparameters. Defaults: learning rate 1e-4, beta1 0.9,
/// beta2 0.999, epsilon 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first and second moment accumulators plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// The (m, v) accumulators, for checkpointing.
    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Rebuilds a state from checkpointed parts.
    pub fn from_parts(m: Vec<f64>, v: Vec<f64>, t: u64) -> Result<Self, AutogradError> {
        if m.len() != v.len() {
            return Err(AutogradError::ShapeMismatch {
                detail: format!("adam moments disagree: {} vs {}", m.len(), v.len()),
            });
        }
        Ok(Self { m, v, t })
    }
}

/// One bias-corrected Adam update:
/// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<(), AutogradError> {
    if param.shape() != grad.shape() || param.numel() != state.m.len() {
        return Err(AutogradError::ShapeMismatch {
            detail: format!(
                "adam_step: param {:?}, grad {:?}, state length {}",
                param.shape(),
                grad.shape(),
                state.m.len()
            ),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    let gd = grad.data();
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = gd[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        *p -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
    Ok(())
}
