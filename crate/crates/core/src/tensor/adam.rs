use super::{DenseTensor, Matrix, TensorError};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
}

impl AdamState {
    pub fn for_param(p: &DenseTensor) -> Self {
        let (r, c) = p.value.shape();
        Self {
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update for every parameter, then clears grads.
pub fn adam_step(
    params: &mut [&mut DenseTensor],
    states: &mut [AdamState],
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    if params.len() != states.len() {
        return Err(TensorError::State(format!(
            "{} parameters but {} optimizer states",
            params.len(),
            states.len()
        )));
    }
    for (k, (p, s)) in params.iter().zip(states.iter()).enumerate() {
        let Some(g) = &p.grad else {
            return Err(TensorError::State(format!("parameter {k} has no gradient")));
        };
        if g.shape() != p.value.shape() || s.m.shape() != p.value.shape() {
            return Err(TensorError::State(format!(
                "parameter {k}: shape {:?}, grad {:?}, state {:?}",
                p.value.shape(),
                g.shape(),
                s.m.shape()
            )));
        }
    }
    for (p, s) in params.iter_mut().zip(states.iter_mut()) {
        let g = p.grad.take().expect("checked above");
        s.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(s.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(s.t as i32);
        let values = p.value.as_mut_slice();
        let m = s.m.as_mut_slice();
        let v = s.v.as_mut_slice();
        for (((w, &gi), mi), vi) in values.iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
