use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::numcore::Tensor;

pub const BETA_M: f64 = 0.9;
pub const BETA_V: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
        }
    }
}

/// First and second moment estimates mirroring the parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }
}

/// One adaptive-moment update with decoupled weight decay. Decay applies to
/// parameters whose `decay_mask` entry is set.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &OptimConfig,
    decay_mask: &[bool],
    epoch: usize,
) -> Result<(), TrainError> {
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(TrainError::GradientShape {
                index: i,
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient { epoch, param: i });
        }
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::GradientShape {
            index: params.len().min(grads.len()),
            expected: vec![params.len()],
            got: vec![grads.len()],
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA_M.powi(t);
    let c2 = 1.0 - BETA_V.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let decay = if decay_mask.get(i).copied().unwrap_or(true) {
            config.weight_decay
        } else {
            0.0
        };
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = BETA_M * m[k] + (1.0 - BETA_M) * gk;
            v[k] = BETA_V * v[k] + (1.0 - BETA_V) * gk * gk;
            let update = (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
            *x -= config.lr * (update + decay * *x);
        }
    }
    Ok(())
}
