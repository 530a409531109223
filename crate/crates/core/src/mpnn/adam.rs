use serde::{Deserialize, Serialize};

use super::MpnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MpnnModel) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Self {
            m: shapes.iter().map(|&k| vec![0.0; k]).collect(),
            v: shapes.iter().map(|&k| vec![0.0; k]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update at step `t ≥ 1`.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

pub fn adam_step(model: &mut MpnnModel, grads: &MpnnModel, state: &mut AdamState, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t;
    for (((p, g), m), v) in model.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut state.m).zip(&mut state.v) {
        adam_update(p.as_mut_slice(), g.as_slice(), m, v, t, cfg);
    }
}
