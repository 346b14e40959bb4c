use serde::{Deserialize, Serialize};

use super::mlp::FlowModelParams;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    Huber,
    Mse,
}

/// Huber penalty with unit threshold.
pub fn huber(r: f64) -> f64 {
    if r.abs() <= 1.0 {
        0.5 * r * r
    } else {
        r.abs() - 0.5
    }
}

pub fn huber_grad(r: f64) -> f64 {
    if r.abs() <= 1.0 {
        r
    } else {
        r.signum()
    }
}

impl LossMode {
    fn value(self, r: f64) -> f64 {
        match self {
            LossMode::Huber => huber(r),
            LossMode::Mse => r * r,
        }
    }

    fn grad(self, r: f64) -> f64 {
        match self {
            LossMode::Huber => huber_grad(r),
            LossMode::Mse => 2.0 * r,
        }
    }
}

/// Paired training batch: row `i` of `x0` is coupled with row `i` of `x1`
/// at time `t[i]`.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub x0: Matrix,
    pub x1: Matrix,
    pub t: Vec<f64>,
}

impl PairBatch {
    pub fn new(x0: Matrix, x1: Matrix, t: Vec<f64>) -> Result<Self> {
        if x0.rows() != x1.rows() || x0.rows() != t.len() {
            return Err(Error::DimensionMismatch {
                context: "pair batch rows",
                expected: x0.rows(),
                got: if x1.rows() != x0.rows() { x1.rows() } else { t.len() },
            });
        }
        if x0.cols() != x1.cols() {
            return Err(Error::DimensionMismatch {
                context: "pair batch dims",
                expected: x0.cols(),
                got: x1.cols(),
            });
        }
        if x0.rows() == 0 {
            return Err(Error::Empty("pair batch"));
        }
        if let Some(&bad) = t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("pair time {bad} outside [0, 1]")));
        }
        Ok(Self { x0, x1, t })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Conditional flow-matching objective and its exact gradient.
///
/// The loss is the batch mean of the dimension-averaged penalty of the
/// residual `v(x_t, t) − (x1 − x0)` with `x_t = t·x1 + (1 − t)·x0`.
pub fn cfm_loss_and_grad(
    params: &FlowModelParams,
    batch: &PairBatch,
    mode: LossMode,
) -> Result<(f64, FlowModelParams)> {
    let d = params.data_dim();
    if batch.x0.cols() != d {
        return Err(Error::DimensionMismatch {
            context: "cfm batch dim",
            expected: d,
            got: batch.x0.cols(),
        });
    }
    let mut grads = FlowModelParams::zeros(&params.arch);
    let norm = (d * batch.len()) as f64;
    let mut total = 0.0;
    let mut xt = vec![0.0; d];
    let mut d_out = vec![0.0; d];
    for i in 0..batch.len() {
        let (x0, x1, t) = (batch.x0.row(i), batch.x1.row(i), batch.t[i]);
        for k in 0..d {
            xt[k] = t * x1[k] + (1.0 - t) * x0[k];
        }
        let trace = params.forward_trace(&xt, t);
        if trace.output.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteForward(i));
        }
        let mut sample = 0.0;
        for k in 0..d {
            let r = trace.output[k] - (x1[k] - x0[k]);
            sample += mode.value(r);
            d_out[k] = mode.grad(r) / norm;
        }
        total += sample;
        params.backward(&trace, &d_out, &mut grads);
    }
    Ok((total / norm, grads))
}
