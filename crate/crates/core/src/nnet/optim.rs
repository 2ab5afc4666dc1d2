//! Adam over flat parameter vectors.
//!
//! Networks expose their parameters in a fixed flat layout
//! ([`crate::nnet::Mlp::flatten_params`], [`crate::nnet::Conv1d::flatten_params`]);
//! the optimizer state mirrors that layout, so one implementation serves
//! every architecture in the crate.

use serde::{Deserialize, Serialize};

use super::NnetError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// First/second-moment accumulators for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    /// Fresh state for `n` parameters.
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place: standard moment update with bias correction
/// (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnetError> {
    if lr <= 0.0 {
        return Err(NnetError::BadLearningRate { lr });
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnetError::ShapeMismatch {
            detail: format!(
                "{} parameters, {} gradients, {} state entries",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    state.t += 1;
    let bias1 = 1.0 - BETA1.powi(state.t as i32);
    let bias2 = 1.0 - BETA2.powi(state.t as i32);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}
