//! Minibatch source/target pairing: independent draws or entropic OT.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{quantile_sorted, Matrix, RngState};

/// Squared-Euclidean ground cost `C[i][j] = ‖a_i − b_j‖²`.
pub fn cost_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "cost_matrix",
            expected: a.cols(),
            got: b.cols(),
        });
    }
    let mut c = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            c[(i, j)] = ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute deviation of a row sum from `1/b` at exit.
    pub marginal_error: f64,
}

impl TransportPlan {
    /// Cost of assigning each row to its highest-mass column.
    pub fn hard_assignment_cost(&self, cost: &Matrix) -> f64 {
        (0..self.plan.rows()).map(|i| cost[(i, argmax(self.plan.row(i)))]).sum()
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations with uniform marginals on both sides.
///
/// Converged means every row sum is within `tol` of `1/b` after a full
/// (row, column) sweep; column sums are exact after each sweep.
pub fn sinkhorn(cost: &Matrix, epsilon: f64, max_iters: usize, tol: f64) -> Result<TransportPlan> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sinkhorn epsilon must be > 0, got {epsilon}"
        )));
    }
    if !cost.all_finite() {
        return Err(Error::NonFinite("sinkhorn cost"));
    }
    let (n, m) = (cost.rows(), cost.cols());
    if n == 0 || m == 0 {
        return Err(Error::Empty("sinkhorn cost"));
    }
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let mut err = f64::INFINITY;

    let row_error = |f: &[f64], g: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let s: f64 = (0..m).map(|j| ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp()).sum();
                (s - 1.0 / n as f64).abs()
            })
            .fold(0.0, f64::max)
    };

    while iterations < max_iters {
        iterations += 1;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[(i, j)]) / epsilon));
            f[i] = epsilon * (log_a - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / epsilon));
            g[j] = epsilon * (log_b - lse);
        }
        err = row_error(&f, &g);
        if err < tol {
            break;
        }
    }

    let mut plan = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            plan[(i, j)] = ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp();
        }
    }
    Ok(TransportPlan {
        plan,
        epsilon,
        iterations,
        converged: err < tol,
        marginal_error: err,
    })
}

/// `0.05 ×` the median off-diagonal cost, falling back to the mean cost and
/// finally to 1 when the costs vanish.
pub fn default_epsilon(cost: &Matrix) -> f64 {
    let mut off: Vec<f64> = (0..cost.rows())
        .flat_map(|i| (0..cost.cols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| cost[(i, j)])
        .collect();
    let scale = if off.is_empty() {
        0.0
    } else {
        off.sort_by(f64::total_cmp);
        quantile_sorted(&off, 0.5)
    };
    let scale = if scale > 0.0 {
        scale
    } else {
        cost.data().iter().sum::<f64>() / cost.data().len().max(1) as f64
    };
    if scale > 0.0 {
        0.05 * scale
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    Independent,
    OtSampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    /// Entropic regularization; `None` picks [`default_epsilon`] per batch.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Reject plans that miss `tol` within `max_iters`.
    pub require_converged: bool,
    /// Pair each row with its plan argmax instead of sampling (debugging aid).
    pub hard_assignment: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            max_iters: 200,
            tol: 1e-6,
            require_converged: false,
            hard_assignment: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
    pub mode: CouplingMode,
}

/// Pairs every row of `source` with a row of `target`.
pub fn make_pairing(
    source: &Matrix,
    target: &Matrix,
    mode: CouplingMode,
    config: &CouplingConfig,
    rng: &mut RngState,
) -> Result<Pairing> {
    if source.cols() != target.cols() {
        return Err(Error::DimensionMismatch {
            context: "make_pairing",
            expected: source.cols(),
            got: target.cols(),
        });
    }
    if target.rows() == 0 {
        return Err(Error::Empty("pairing target batch"));
    }
    let pairs = match mode {
        CouplingMode::Independent => (0..source.rows()).map(|i| (i, rng.index(target.rows()))).collect(),
        CouplingMode::OtSampled => {
            if source.rows() != target.rows() {
                return Err(Error::DimensionMismatch {
                    context: "ot pairing batch size",
                    expected: source.rows(),
                    got: target.rows(),
                });
            }
            let cost = cost_matrix(source, target)?;
            let eps = config.epsilon.unwrap_or_else(|| default_epsilon(&cost));
            let plan = sinkhorn(&cost, eps, config.max_iters, config.tol)?;
            if config.require_converged && !plan.converged {
                return Err(Error::PlanNotConverged(plan.marginal_error));
            }
            (0..source.rows())
                .map(|i| {
                    let row = plan.plan.row(i);
                    let j = if config.hard_assignment {
                        argmax(row)
                    } else {
                        rng.categorical(row)
                    };
                    (i, j)
                })
                .collect()
        }
    };
    Ok(Pairing { pairs, mode })
}
