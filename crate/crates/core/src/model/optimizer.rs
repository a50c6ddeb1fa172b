use crate::error::{Error, Result};
use crate::model::ModelParams;

/// AdamW hyperparameters (decoupled weight decay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment buffers plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamWState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamWState {
    pub fn new(dim: usize) -> Self {
        AdamWState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One decoupled-weight-decay adaptive-moment update:
/// `theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Non-finite gradient entries abort the step with a numeric fault and
/// leave parameters and state untouched.
pub fn optimizer_step(
    params: &mut ModelParams,
    gradient: &[f64],
    state: &mut AdamWState,
    hyper: &AdamWConfig,
) -> Result<()> {
    if gradient.len() != params.dim() || state.m.len() != params.dim() {
        return Err(Error::Shape(format!(
            "gradient/state dimension mismatch: grad {}, state {}, params {}",
            gradient.len(),
            state.m.len(),
            params.dim()
        )));
    }
    if let Some(idx) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient entry at coordinate {idx}"
        )));
    }
    state.t += 1;
    let bias1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let bias2 = 1.0 - hyper.beta2.powi(state.t as i32);
    let flat = params.flat_mut();
    for i in 0..flat.len() {
        let g = gradient[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        flat[i] -= hyper.lr * hyper.weight_decay * flat[i];
        flat[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}
