use serde::{Deserialize, Serialize};

use super::GradEstimate;
use crate::error::{Error, Result};
use crate::model::{Block, ModelParams, ParamBlocks};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParamBlocks,
    pub v: ParamBlocks,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam ascent step. Blocks frozen by the variant are left untouched.
///
/// A gradient with a non-finite entry is rejected: nothing changes and
/// [`Error::NonFinite`] is returned.
pub fn adam_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    grad: &GradEstimate,
) -> Result<()> {
    if !grad.same_shape(params) || !state.m.same_shape(params) {
        return Err(Error::Shape(
            "gradient does not match parameter shapes".into(),
        ));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let variant = params.variant;
    for block in Block::ALL {
        if variant.is_frozen(block) {
            continue;
        }
        let g = grad.block(block);
        let m = state.m.block_mut(block);
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
        }
        let v = state.v.block_mut(block);
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
        }
        let (m, v) = (state.m.block(block), state.v.block(block));
        for ((p, mi), vi) in params.blocks.block_mut(block).iter_mut().zip(m).zip(v) {
            *p += c.step_size * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
        }
    }
    Ok(())
}
