//! Steering pipelines: a uniform difference-in-means shift, and transport
//! along the (guided) learned flow.
//!
//! Flow steering maps each row through three spaces: source-normalized
//! input, ODE integration from `t = 0` to `t = 1`, then denormalization
//! with the target statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{RepresentationSet, Role};
use crate::error::{Error, Result};
use crate::evaluation::{all_metrics, mmd_auto_var, CovMode, MetricConfig, MMD_ESTIMATOR};
use crate::flow::{train, Checkpoint, TrainingConfig};
use crate::guidance::guided_field;
use crate::numerics::{Matrix, RngState};
use crate::ode::{integrate, SolverConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    pub v: Vec<f64>,
    pub gamma: f64,
}

/// `v = mean(target) − mean(source)` with `γ = 1`.
pub fn fit_linear(source: &Matrix, target: &Matrix) -> Result<SteeringVector> {
    if source.cols() != target.cols() {
        return Err(Error::DimensionMismatch {
            context: "fit_linear",
            expected: source.cols(),
            got: target.cols(),
        });
    }
    if source.rows() == 0 || target.rows() == 0 {
        return Err(Error::Empty("fit_linear input"));
    }
    let ms = source.column_means();
    let mt = target.column_means();
    Ok(SteeringVector {
        v: mt.iter().zip(&ms).map(|(a, b)| a - b).collect(),
        gamma: 1.0,
    })
}

impl SteeringVector {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Adds `γ·v` to every row.
pub fn linear_steer(x: &Matrix, sv: &SteeringVector) -> Result<Matrix> {
    if x.cols() != sv.v.len() {
        return Err(Error::DimensionMismatch {
            context: "linear_steer",
            expected: sv.v.len(),
            got: x.cols(),
        });
    }
    if !x.all_finite() || !sv.gamma.is_finite() || sv.v.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear_steer input"));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (xi, vi) in out.row_mut(r).iter_mut().zip(&sv.v) {
            *xi += sv.gamma * vi;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteerOptions {
    pub eta: f64,
    /// Integrate the bare learned field, with no guidance term at all.
    pub unguided: bool,
    pub solver: SolverConfig,
}

impl Default for SteerOptions {
    fn default() -> Self {
        Self {
            eta: 1.0,
            unguided: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Diverged { t: f64 },
    StepLimit { t: f64 },
}

impl RowStatus {
    pub fn is_ok(self) -> bool {
        matches!(self, RowStatus::Ok)
    }

    pub fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Diverged { .. } => "diverged",
            RowStatus::StepLimit { .. } => "step-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteeringOutcome {
    /// One row per input; rows whose status is not `Ok` are NaN.
    pub steered: Matrix,
    pub status: Vec<RowStatus>,
    /// Per-row trajectories in normalized flow space, when recorded.
    pub trajectories: Option<Vec<Option<Trajectory>>>,
}

impl SteeringOutcome {
    pub fn n_failed(&self) -> usize {
        self.status.iter().filter(|s| !s.is_ok()).count()
    }

    pub fn ok_indices(&self) -> Vec<usize> {
        (0..self.status.len()).filter(|&i| self.status[i].is_ok()).collect()
    }

    /// The steered set, refusing if any row failed.
    pub fn steered_set(&self) -> Result<RepresentationSet> {
        match self.n_failed() {
            0 => RepresentationSet::new(Role::Steered, self.steered.clone()),
            n => Err(Error::DivergedRows(n)),
        }
    }
}

/// Transports each input row along the learned flow.
///
/// Rows are integrated in parallel; output order matches input order and
/// each row's result depends only on that row.
pub fn flow_steer(ck: &Checkpoint, inputs: &Matrix, opts: &SteerOptions) -> Result<SteeringOutcome> {
    let d = ck.data_dim();
    if inputs.cols() != d {
        return Err(Error::DimensionMismatch {
            context: "flow_steer input",
            expected: d,
            got: inputs.cols(),
        });
    }
    if !opts.eta.is_finite() {
        return Err(Error::InvalidArgument("eta must be finite".into()));
    }
    opts.solver.validate()?;

    let rows: Vec<(Vec<f64>, RowStatus, Option<Trajectory>)> = (0..inputs.rows())
        .into_par_iter()
        .map(|i| steer_row(ck, inputs.row(i), opts))
        .collect::<Result<_>>()?;

    let mut steered = Matrix::zeros(inputs.rows(), d);
    let mut status = Vec::with_capacity(rows.len());
    let mut trajectories = opts.solver.record_trajectory.then(Vec::new);
    for (i, (x, s, tr)) in rows.into_iter().enumerate() {
        steered.row_mut(i).copy_from_slice(&x);
        status.push(s);
        if let Some(all) = trajectories.as_mut() {
            all.push(tr);
        }
    }
    Ok(SteeringOutcome {
        steered,
        status,
        trajectories,
    })
}

fn steer_row(ck: &Checkpoint, x: &[f64], opts: &SteerOptions) -> Result<(Vec<f64>, RowStatus, Option<Trajectory>)> {
    let d = x.len();
    let failed = |s: RowStatus| Ok((vec![f64::NAN; d], s, None));
    if x.iter().any(|v| !v.is_finite()) {
        return failed(RowStatus::Diverged { t: 0.0 });
    }
    let mut x0 = x.to_vec();
    ck.source_norm.transform_row_in_place(&mut x0);
    let solved = if opts.unguided {
        integrate(|x, t| ck.params.forward(x, t), &x0, &opts.solver)
    } else {
        integrate(
            |x, t| guided_field(&ck.params, &ck.guidance, opts.eta, x, t),
            &x0,
            &opts.solver,
        )
    };
    match solved {
        Ok(sol) => {
            let mut x1 = sol.x1;
            ck.target_norm.inverse_row_in_place(&mut x1);
            if x1.iter().any(|v| !v.is_finite()) {
                return failed(RowStatus::Diverged { t: 1.0 });
            }
            Ok((x1, RowStatus::Ok, sol.trajectory))
        }
        Err(Error::Diverged(t)) => failed(RowStatus::Diverged { t }),
        Err(Error::StepLimit { t, .. }) => failed(RowStatus::StepLimit { t }),
        Err(e) => Err(e),
    }
}

/// Mean log density of steered rows under the target Gaussian fit,
/// evaluated in target-normalized space.
pub fn mean_target_log_likelihood(ck: &Checkpoint, steered: &Matrix) -> Result<f64> {
    if steered.rows() == 0 {
        return Err(Error::Empty("steered rows"));
    }
    let z = ck.target_norm.transform(steered)?;
    Ok(z.row_iter().map(|r| ck.guidance.log_density(r, 1)).sum::<f64>() / z.rows() as f64)
}

/// Row indices `(fit, held_out)` for a set of `n` rows.
pub fn holdout_split(n: usize, fraction: f64, rng: &mut RngState) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let held = ((n as f64) * fraction).round() as usize;
    if held < 2 || n - held < 2 {
        return Err(Error::TooFewRows { needed: 4, got: n });
    }
    let perm = rng.permutation(n);
    let mut held_out = perm[..held].to_vec();
    let mut fit = perm[held..].to_vec();
    held_out.sort_unstable();
    fit.sort_unstable();
    Ok((fit, held_out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub holdout_fraction: f64,
    pub split_seed: u64,
    pub gamma: f64,
    pub steer: SteerOptions,
    pub metrics: MetricConfig,
    /// Drop failed flow rows from metrics instead of refusing.
    pub skip_diverged: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            split_seed: 1,
            gamma: 1.0,
            steer: SteerOptions::default(),
            metrics: MetricConfig::default(),
            skip_diverged: false,
        }
    }
}

/// Fit and held-out parts of the source and target sets.
#[derive(Debug, Clone)]
pub struct Split {
    pub source_fit: Matrix,
    pub source_held: Matrix,
    pub target_fit: Matrix,
    pub target_held: Matrix,
}

/// Splits source then target with one stream seeded by `split_seed`.
pub fn split_sets(source: &Matrix, target: &Matrix, fraction: f64, split_seed: u64) -> Result<Split> {
    let mut rng = RngState::new(split_seed);
    let (sf, sh) = holdout_split(source.rows(), fraction, &mut rng)?;
    let (tf, th) = holdout_split(target.rows(), fraction, &mut rng)?;
    Ok(Split {
        source_fit: source.select_rows(&sf),
        source_held: source.select_rows(&sh),
        target_fit: target.select_rows(&tf),
        target_held: target.select_rows(&th),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub arm: String,
    pub mmd: f64,
    pub mmd_scaled_1000: f64,
    pub fid: f64,
    pub kid: f64,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub mmd_estimator: String,
    pub mmd_var: f64,
    pub fid_cov_mode: CovMode,
    pub kid_gamma: f64,
    pub n_heldout_source: usize,
    pub n_heldout_target: usize,
    /// Failed flow rows excluded from metrics (only with `skip_diverged`).
    pub skipped_diverged: usize,
    pub arms: Vec<ArmMetrics>,
}

impl AlignmentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.arm == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,mmd,mmd_scaled_1000,fid,kid,n_diverged\n");
        for a in &self.arms {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                a.arm, a.mmd, a.mmd_scaled_1000, a.fid, a.kid, a.n_diverged
            ));
        }
        out
    }
}

pub const ARM_BEFORE: &str = "before";
pub const ARM_LINEAR: &str = "linear";
pub const ARM_FLOW: &str = "flow";

/// Held-out comparison of no steering, linear steering and flow steering
/// against the target.
///
/// Fits (linear vector, and the flow model unless `checkpoint` is given)
/// use only the fit parts of the split.
pub fn alignment_experiment(
    source: &Matrix,
    target: &Matrix,
    train_config: &TrainingConfig,
    config: &AlignmentConfig,
    checkpoint: Option<&Checkpoint>,
) -> Result<AlignmentReport> {
    config.metrics.validate()?;
    let split = split_sets(source, target, config.holdout_fraction, config.split_seed)?;
    let trained;
    let ck = match checkpoint {
        Some(ck) => ck,
        None => {
            let s = RepresentationSet::new(Role::Source, split.source_fit.clone())?;
            let t = RepresentationSet::new(Role::Target, split.target_fit.clone())?;
            trained = train(train_config, &s, &t)?.checkpoint;
            &trained
        }
    };

    let sv = fit_linear(&split.source_fit, &split.target_fit)?.with_gamma(config.gamma);
    let linear = linear_steer(&split.source_held, &sv)?;
    let outcome = flow_steer(ck, &split.source_held, &config.steer)?;
    let n_failed = outcome.n_failed();
    if n_failed > 0 && !config.skip_diverged {
        return Err(Error::DivergedRows(n_failed));
    }
    let flow = outcome.steered.select_rows(&outcome.ok_indices());
    if flow.rows() < 2 {
        return Err(Error::DivergedRows(n_failed));
    }

    let held_t = &split.target_held;
    let mmd_var = match config.metrics.mmd_var.value() {
        Some(v) => v,
        None => mmd_auto_var(&split.source_held, held_t)?,
    };
    let mut arms = Vec::new();
    for (name, x, failed) in [
        (ARM_BEFORE, &split.source_held, 0),
        (ARM_LINEAR, &linear, 0),
        (ARM_FLOW, &flow, n_failed),
    ] {
        let m = all_metrics(x, held_t, &config.metrics, mmd_var)?;
        arms.push(ArmMetrics {
            arm: name.to_string(),
            mmd: m.mmd,
            mmd_scaled_1000: m.mmd_scaled(),
            fid: m.fid,
            kid: m.kid,
            n_diverged: failed,
        });
    }
    Ok(AlignmentReport {
        mmd_estimator: MMD_ESTIMATOR.to_string(),
        mmd_var,
        fid_cov_mode: config.metrics.fid_cov_mode,
        kid_gamma: config.metrics.kid_gamma_for(source.cols()),
        n_heldout_source: split.source_held.rows(),
        n_heldout_target: held_t.rows(),
        skipped_diverged: if config.skip_diverged { n_failed } else { 0 },
        arms,
    })
}
