//! Adam optimizer over [`ParamSet`] tensors.

use serde::{Deserialize, Serialize};

use super::{Gradients, ParamSet, Real, VariableWidthMlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates congruent to the model parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub hyper: AdamParams,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &VariableWidthMlp<T>, hyper: AdamParams) -> Self {
        AdamState {
            step: 0,
            hyper,
            m: ParamSet::zeros(model.arch(), model.available_width()),
            v: ParamSet::zeros(model.arch(), model.available_width()),
        }
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients before
/// touching any state, so an aborted step leaves model and moments untouched.
pub fn adam_step<T: Real>(
    model: &mut VariableWidthMlp<T>,
    state: &mut AdamState<T>,
    grads: &Gradients<T>,
    lr: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradients".to_string()));
    }
    let t = state.step + 1;
    let hp = state.hyper;
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);

    let mut params = model.params.tensor_slices_mut();
    let mut ms = state.m.tensor_slices_mut();
    let mut vs = state.v.tensor_slices_mut();
    let gs = grads.tensor_slices();
    if gs.len() != params.len() || gs.iter().zip(params.iter()).any(|(g, p)| g.len() != p.len()) {
        return Err(Error::invalid(
            "gradient tensors are not congruent to the model parameters",
        ));
    }
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(gs.iter())
        .zip(ms.iter_mut().zip(vs.iter_mut()))
    {
        for k in 0..p.len() {
            let gk = g[k].as_f64();
            let mk = hp.beta1 * m[k].as_f64() + (1.0 - hp.beta1) * gk;
            let vk = hp.beta2 * v[k].as_f64() + (1.0 - hp.beta2) * gk * gk;
            m[k] = T::from_f64(mk);
            v[k] = T::from_f64(vk);
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            p[k] = T::from_f64(p[k].as_f64() - lr * m_hat / (v_hat.sqrt() + hp.epsilon));
        }
    }
    state.step = t;
    Ok(())
}
