//! AdamW with bias-corrected moments and decoupled weight decay.
//!
//! Per scalar, at step `t`:
//! ```text
//! θ ← θ − lr·wd·θ
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! θ ← θ − lr · (m / (1−β1ᵗ)) / (sqrt(v / (1−β2ᵗ)) + eps)
//! ```

use crate::error::{Error, Result};
use crate::model::Params;

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
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub step: u64,
    pub m: Params,
    pub v: Params,
}

impl AdamWState {
    pub fn new(params: &Params) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

fn same_shapes(a: &Params, b: &Params) -> bool {
    let (ta, tb) = (a.tensors(), b.tensors());
    ta.len() == tb.len()
        && ta
            .iter()
            .zip(&tb)
            .all(|((na, x), (nb, y))| na == nb && x.shape() == y.shape())
}

pub fn adamw_step(
    params: &mut Params,
    grads: &Params,
    state: &mut AdamWState,
    hyper: &AdamWConfig,
) -> Result<()> {
    if !same_shapes(params, grads) || !same_shapes(params, &state.m) {
        return Err(Error::Dimension(
            "parameter, gradient and optimizer shapes differ".into(),
        ));
    }
    for (name, g) in grads.tensors() {
        if let Some(x) = g.data.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} contains {x}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let decay = hyper.lr * hyper.weight_decay;

    let grads = grads.tensors();
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for (i, (_, p)) in params.tensors_mut().into_iter().enumerate() {
        let g = &grads[i].1.data;
        let m = &mut ms[i].1.data;
        let v = &mut vs[i].1.data;
        for j in 0..p.data.len() {
            let gj = g[j];
            p.data[j] -= decay * p.data[j];
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p.data[j] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
