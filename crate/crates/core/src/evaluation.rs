//! Distribution distances (MMD, FID, KID) and the one-sided Wilcoxon
//! signed-rank test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt, quantile_sorted, symmetric_eigen, Matrix};

/// Name of the MMD estimator, recorded in reports.
pub const MMD_ESTIMATOR: &str = "biased";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// A positive parameter given explicitly or derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Auto(AutoKeyword),
    Value(f64),
}

impl Setting {
    pub const AUTO: Setting = Setting::Auto(AutoKeyword::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Setting::Value(v) => Some(v),
            Setting::Auto(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Full,
    Diag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub mmd_var: Setting,
    pub fid_cov_mode: CovMode,
    pub kid_degree: u32,
    pub kid_coef: f64,
    pub kid_gamma: Setting,
    /// Adds `mmd × 1000` to reports; stored raw values are never scaled.
    pub report_scale_mmd: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            mmd_var: Setting::AUTO,
            fid_cov_mode: CovMode::Full,
            kid_degree: 3,
            kid_coef: 1.0,
            kid_gamma: Setting::AUTO,
            report_scale_mmd: true,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("mmd_var", self.mmd_var), ("kid_gamma", self.kid_gamma)] {
            if let Some(v) = s.value() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{name} must be > 0")));
                }
            }
        }
        if self.kid_degree == 0 {
            return Err(Error::InvalidArgument("kid_degree must be ≥ 1".into()));
        }
        if !(self.kid_coef > 0.0 && self.kid_coef.is_finite()) {
            return Err(Error::InvalidArgument("kid_coef must be > 0".into()));
        }
        Ok(())
    }

    pub fn kid_gamma_for(&self, d: usize) -> f64 {
        self.kid_gamma.value().unwrap_or(1.0 / d as f64)
    }
}

fn check_pair(x: &Matrix, y: &Matrix, min_rows: usize, what: &'static str) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: x.cols(),
            got: y.cols(),
        });
    }
    for m in [x, y] {
        if m.rows() < min_rows {
            return Err(Error::TooFewRows {
                needed: min_rows,
                got: m.rows(),
            });
        }
        if !m.all_finite() {
            return Err(Error::NonFinite(what));
        }
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `Σ_i Σ_j k(a_i, b_j)`, optionally skipping `i = j`. Row sums run in
/// parallel and are added in row order, so the result is deterministic.
fn kernel_sum(a: &Matrix, b: &Matrix, skip_diag: bool, k: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> f64 {
    let rows: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            (0..b.rows())
                .filter(|&j| !(skip_diag && i == j))
                .map(|j| k(ai, b.row(j)))
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// Biased squared MMD with kernel `exp(−‖a−b‖² / (2·var))`.
pub fn mmd(x: &Matrix, y: &Matrix, var: f64) -> Result<f64> {
    check_pair(x, y, 1, "mmd input")?;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::InvalidArgument(format!("mmd var must be > 0, got {var}")));
    }
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / (2.0 * var)).exp();
    let (m, n) = (x.rows() as f64, y.rows() as f64);
    let kxx = kernel_sum(x, x, false, k) / (m * m);
    let kyy = kernel_sum(y, y, false, k) / (n * n);
    let kxy = kernel_sum(x, y, false, k) / (m * n);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// `‖mean(X) − mean(Y)‖²`, floored at 1% of the median pairwise squared
/// distance of the pooled rows so coinciding means still give a usable
/// bandwidth.
pub fn mmd_auto_var(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(x, y, 1, "mmd auto var")?;
    let mx = x.column_means();
    let my = y.column_means();
    let mean_gap = sq_dist(&mx, &my);
    let pooled: Vec<&[f64]> = x.row_iter().chain(y.row_iter()).collect();
    let mut dists: Vec<f64> = (0..pooled.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let pooled = &pooled;
            ((i + 1)..pooled.len()).map(move |j| sq_dist(pooled[i], pooled[j]))
        })
        .collect();
    let floor = if dists.is_empty() {
        0.0
    } else {
        dists.sort_by(f64::total_cmp);
        0.01 * quantile_sorted(&dists, 0.5)
    };
    let var = mean_gap.max(floor);
    if var > 0.0 {
        Ok(var)
    } else {
        Err(Error::InvalidArgument("mmd auto var: all rows coincide".into()))
    }
}

/// Fréchet distance between Gaussian fits of the two sets.
pub fn fid(x: &Matrix, y: &Matrix, mode: CovMode) -> Result<f64> {
    check_pair(x, y, 2, "fid input")?;
    let mean_term = sq_dist(&x.column_means(), &y.column_means());
    let (trace_term, scale) = match mode {
        CovMode::Diag => {
            let sx = column_stds(x);
            let sy = column_stds(y);
            let t: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum();
            let s: f64 = sx.iter().chain(&sy).map(|v| v * v).sum();
            (t, s)
        }
        CovMode::Full => {
            let cx = x.covariance()?;
            let cy = y.covariance()?;
            let root = psd_sqrt(&cx)?;
            let mut inner = root.matmul(&cy)?.matmul(&root)?;
            symmetrize(&mut inner);
            let cross: f64 = symmetric_eigen(&inner)?.values.iter().map(|l| l.max(0.0).sqrt()).sum();
            let s = cx.trace() + cy.trace();
            (s - 2.0 * cross, s)
        }
    };
    let total = mean_term + trace_term;
    if total >= 0.0 {
        Ok(total)
    } else if total > -1e-8 * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NotPsd(total))
    }
}

fn column_stds(x: &Matrix) -> Vec<f64> {
    let mean = x.column_means();
    let mut var = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for ((v, xi), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    let denom = (x.rows() - 1) as f64;
    var.into_iter().map(|v| (v / denom).sqrt()).collect()
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Unbiased squared MMD with kernel `(γ·aᵀb + coef)^degree`.
pub fn kid(x: &Matrix, y: &Matrix, gamma: f64, coef: f64, degree: u32) -> Result<f64> {
    check_pair(x, y, 2, "kid input")?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("kid gamma must be > 0, got {gamma}")));
    }
    let k = |a: &[f64], b: &[f64]| (gamma * dot(a, b) + coef).powi(degree as i32);
    let (m, n) = (x.rows() as f64, y.rows() as f64);
    let kxx = kernel_sum(x, x, true, k) / (m * (m - 1.0));
    let kyy = kernel_sum(y, y, true, k) / (n * (n - 1.0));
    let kxy = kernel_sum(x, y, false, k) / (m * n);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// MMD, FID and KID under one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub mmd: f64,
    pub fid: f64,
    pub kid: f64,
}

impl MetricValues {
    pub fn mmd_scaled(&self) -> f64 {
        self.mmd * 1000.0
    }
}

/// Evaluates all three metrics. `mmd_var` must already be resolved when
/// the configuration says `auto`; pass the value from [`mmd_auto_var`].
pub fn all_metrics(x: &Matrix, y: &Matrix, config: &MetricConfig, mmd_var: f64) -> Result<MetricValues> {
    Ok(MetricValues {
        mmd: mmd(x, y, mmd_var)?,
        fid: fid(x, y, config.fid_cov_mode)?,
        kid: kid(x, y, config.kid_gamma_for(x.cols()), config.kid_coef, config.kid_degree)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    /// Exact for at most [`EXACT_MAX_N`] nonzero differences, normal otherwise.
    Auto,
    Exact,
    Normal,
}

pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub p_value: f64,
    /// Nonzero differences that were ranked.
    pub n: usize,
    pub zeros_dropped: usize,
    pub method: WilcoxonMethod,
}

/// One-sided signed-rank test of `median(d) > 0` with automatic method choice.
pub fn wilcoxon_one_sided(differences: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_with(differences, WilcoxonMethod::Auto)
}

pub fn wilcoxon_with(differences: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("wilcoxon differences"));
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    let zeros_dropped = differences.len() - nonzero.len();
    let n = nonzero.len();
    if n == 0 {
        return Err(Error::Empty("wilcoxon differences after dropping zeros"));
    }

    // Midranks of |d|, doubled so every rank is an integer.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().total_cmp(&nonzero[b].abs()));
    let mut rank2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // Positions i..=j hold ranks i+1..=j+1; twice their mean is i+j+2.
        for &o in &order[i..=j] {
            rank2[o] = (i + j + 2) as u64;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    let w2: u64 = (0..n).filter(|&k| nonzero[k] > 0.0).map(|k| rank2[k]).sum();
    let w_plus = w2 as f64 / 2.0;

    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p_value = match method {
        WilcoxonMethod::Exact => exact_upper_tail(&rank2, w2),
        _ => normal_upper_tail(n, w_plus, &tie_sizes),
    };
    Ok(WilcoxonResult {
        w_plus,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        zeros_dropped,
        method,
    })
}

/// `P(W ≥ w)` under independent fair signs, by counting sign patterns
/// through a subset-sum table over the doubled ranks.
fn exact_upper_tail(rank2: &[u64], w2: u64) -> f64 {
    let total: u64 = rank2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in rank2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: f64 = counts[w2 as usize..].iter().sum();
    tail / 2f64.powi(rank2.len() as i32)
}

fn normal_upper_tail(n: usize, w_plus: f64, tie_sizes: &[usize]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
    if var <= 0.0 {
        return if w_plus >= mean { 1.0 } else { 0.0 };
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}
