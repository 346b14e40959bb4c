//! Training-free guidance from diagonal Gaussian fits of the source and
//! target sets.
//!
//! With `p0 ≈ N(μ0, diag σ0²)` and `p1 ≈ N(μ1, diag σ1²)`, the score
//! difference `∇log p1 − ∇log p0` is available in closed form. The guided
//! field replaces the learned velocity's component along that direction
//! with `η‖g‖`:
//!
//! ```text
//! dx/dt = v + η g − (vᵀḡ) ḡ,   ḡ = g / ‖g‖
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowModelParams;
use crate::numerics::Matrix;

pub const SIGMA_FLOOR: f64 = 1e-8;
/// Below this norm `ḡ` is undefined and the plain learned field is used.
pub const MIN_GUIDANCE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceStats {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub sigma1: Vec<f64>,
}

fn mean_and_std(x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: x.rows(),
        });
    }
    let mean = x.column_means();
    let mut var = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for ((v, xi), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    let denom = (x.rows() - 1) as f64;
    let std = var.into_iter().map(|v| (v / denom).sqrt().max(SIGMA_FLOOR)).collect();
    Ok((mean, std))
}

/// Per-dimension sample means and (N−1) standard deviations, floored.
pub fn fit_guidance_stats(source: &Matrix, target: &Matrix) -> Result<GuidanceStats> {
    if source.cols() != target.cols() {
        return Err(Error::DimensionMismatch {
            context: "guidance stats",
            expected: source.cols(),
            got: target.cols(),
        });
    }
    let (mu0, sigma0) = mean_and_std(source)?;
    let (mu1, sigma1) = mean_and_std(target)?;
    Ok(GuidanceStats {
        mu0,
        mu1,
        sigma0,
        sigma1,
    })
}

impl GuidanceStats {
    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// `g(x) = (μ1 − x)/σ1² − (μ0 − x)/σ0²`, per dimension.
    pub fn guidance_vector(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let s0 = self.sigma0[k] * self.sigma0[k];
                let s1 = self.sigma1[k] * self.sigma1[k];
                (self.mu1[k] - x[k]) / s1 - (self.mu0[k] - x[k]) / s0
            })
            .collect()
    }

    /// Log density of `x` under the target (`which = 1`) or source
    /// (`which = 0`) diagonal Gaussian.
    pub fn log_density(&self, x: &[f64], which: u8) -> f64 {
        let (mu, sigma) = if which == 0 {
            (&self.mu0, &self.sigma0)
        } else {
            (&self.mu1, &self.sigma1)
        };
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        x.iter()
            .zip(mu)
            .zip(sigma)
            .map(|((xi, m), s)| {
                let z = (xi - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * ln_2pi
            })
            .sum()
    }

    /// `log p1(x) − log p0(x)`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        self.log_density(x, 1) - self.log_density(x, 0)
    }
}

/// Combines a learned velocity with the guidance term.
pub fn guide_velocity(v: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < MIN_GUIDANCE_NORM {
        return v.to_vec();
    }
    let proj = v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / norm;
    v.iter()
        .zip(g)
        .map(|(vi, gi)| vi + eta * gi - proj * (gi / norm))
        .collect()
}

/// Guided velocity `v + η g − (vᵀḡ)ḡ` at `(x, t)`.
pub fn guided_field(params: &FlowModelParams, stats: &GuidanceStats, eta: f64, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let v = params.forward(x, t)?;
    let g = stats.guidance_vector(x);
    Ok(guide_velocity(&v, &g, eta))
}
