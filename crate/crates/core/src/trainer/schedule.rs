use std::f64::consts::PI;

use crate::sptmodel::ParamGroup;
use crate::{Error, Result};

/// Linear warmup from 0 to `base_lr`, then cosine decay to `min_lr`.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64, min_lr: f64) -> Result<f64> {
    if warmup_steps >= total_steps {
        return Err(Error::Config(format!(
            "warmup steps {warmup_steps} must be below total steps {total_steps}"
        )));
    }
    if step >= total_steps {
        return Err(Error::Invalid(format!("step {step} beyond schedule of {total_steps}")));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let span = (total_steps - 1 - warmup_steps).max(1) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    Ok(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (PI * progress).cos()))
}

/// Learning-rate multiplier for layer-wise decay: the head gets 1, block
/// `l` of `L` gets `decay^(L + 1 - l)`, embeddings get `decay^(L + 1)`.
pub fn layer_lr_scale(group: ParamGroup, layers: usize, decay: f64) -> f64 {
    match group {
        ParamGroup::Head => 1.0,
        ParamGroup::Block(l) => decay.powi((layers + 1 - l) as i32),
        ParamGroup::Embedding => decay.powi((layers + 1) as i32),
    }
}
