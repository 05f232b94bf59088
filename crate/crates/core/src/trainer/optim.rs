use serde::{Deserialize, Serialize};

use crate::numcore::{Array, Scalar};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// Per-parameter learning-rate multiplier and weight-decay switch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamHyper {
    pub lr_scale: f64,
    pub decay: bool,
}

impl Default for ParamHyper {
    fn default() -> Self {
        Self {
            lr_scale: 1.0,
            decay: true,
        }
    }
}

/// First/second moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Array<T>>,
    pub v: Vec<Array<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &[Array<T>]) -> Self {
        let zeros = || params.iter().map(|p| Array::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update:
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
pub fn adamw_step<T: Scalar>(
    params: &mut [Array<T>],
    grads: &[Array<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    hyper: &[ParamHyper],
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != hyper.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adamw_step",
            format!(
                "{} params, {} grads, {} hyper, {} moments",
                params.len(),
                grads.len(),
                hyper.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "adamw_step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
        g.check_finite(&format!("gradient of parameter {i}"))?;
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let h = hyper[i];
        let lr_i = lr * h.lr_scale;
        let step = T::of(lr_i / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(cfg.eps);
        let shrink = if h.decay { T::of(1.0 - lr_i * cfg.weight_decay) } else { T::one() };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((theta, &gk), mk), vk) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mk = b1 * *mk + one_b1 * gk;
            *vk = b2 * *vk + one_b2 * gk * gk;
            let update = step * *mk / ((*vk * inv_bc2).sqrt() + eps);
            *theta = *theta * shrink - update;
        }
    }
    Ok(())
}
