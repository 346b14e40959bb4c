use super::mlp::FlowModelParams;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.90;
pub const ADAM_BETA2: f64 = 0.95;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam without weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: FlowModelParams,
    v: FlowModelParams,
}

impl AdamState {
    pub fn new(params: &FlowModelParams, lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            m: FlowModelParams::zeros(&params.arch),
            v: FlowModelParams::zeros(&params.arch),
        }
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut FlowModelParams, grads: &FlowModelParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::InvalidArgument("adam: parameter/gradient shapes differ".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let blocks = params
            .blocks_mut()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut().zip(self.v.blocks_mut()));
        for ((p, g), (m, v)) in blocks {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
