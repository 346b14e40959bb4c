//! Subcommand bodies. Each takes a resolved [`RunConfig`] and an output
//! directory, and writes only deterministic artifacts; timestamps go to the
//! metadata sidecar written by the caller.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fmsteer::dataio::{compute_dim_stats, read_repset, write_repset, RepresentationSet, Role};
use fmsteer::evaluation::{all_metrics, mmd_auto_var, MetricValues};
use fmsteer::flow::{load_checkpoint, save_checkpoint, train, Checkpoint, LogEntry, LossMode, TrainingConfig};
use fmsteer::normalization::NormMethod;
use fmsteer::numerics::Matrix;
use fmsteer::steering::{
    alignment_experiment, flow_steer, mean_target_log_likelihood, split_sets, AlignmentReport, Split, SteerOptions,
    SteeringOutcome,
};
use fmsteer::Error;
use serde::Serialize;

use crate::config::RunConfig;

pub const SOURCE_FILE: &str = "source.fsrp";
pub const TARGET_FILE: &str = "target.fsrp";
pub const MODEL_FILE: &str = "model.fsck";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const STEERED_FILE: &str = "steered.fsrp";
pub const ROW_STATUS_FILE: &str = "row_status.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const REPORT_JSON_FILE: &str = "alignment_report.json";
pub const REPORT_CSV_FILE: &str = "alignment_report.csv";
pub const ABLATION_FILE: &str = "ablation_report.csv";
pub const SWEEP_FILE: &str = "sweep_report.csv";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let spec = config
        .data
        .scenario_spec()
        .context("synth needs scenario data (data.kind = \"scenario\")")?;
    let (s, t) = fmsteer::dataio::gen_scenario(&spec)?;
    write_repset(&s, out.join(SOURCE_FILE))?;
    write_repset(&t, out.join(TARGET_FILE))?;
    Ok(())
}

/// Per-dimension statistics of an FSRP file as pretty JSON.
pub fn cmd_stats(file: &Path) -> Result<String> {
    let set = read_repset(file)?;
    let stats = compute_dim_stats(&set)?;
    let mut text = serde_json::to_string_pretty(&stats)?;
    text.push('\n');
    Ok(text)
}

/// Loads the data and splits it exactly as `eval` does.
pub fn load_split(config: &RunConfig) -> Result<Split> {
    let (s, t) = config.data.load()?;
    Ok(split_sets(
        s.data(),
        t.data(),
        config.eval.holdout_fraction,
        config.eval.split_seed,
    )?)
}

/// Trains on the fit part of the split so evaluation stays held out.
pub fn train_on_fit(train_config: &TrainingConfig, split: &Split) -> Result<(Checkpoint, Vec<LogEntry>)> {
    let s = RepresentationSet::new(Role::Source, split.source_fit.clone())?;
    let t = RepresentationSet::new(Role::Target, split.target_fit.clone())?;
    let out = train(train_config, &s, &t)?;
    Ok((out.checkpoint, out.log))
}

pub fn training_log_csv(log: &[LogEntry]) -> String {
    let mut out = String::from("iteration,mean_loss\n");
    for e in log {
        writeln!(out, "{},{}", e.iteration, e.mean_loss).unwrap();
    }
    out
}

pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<()> {
    let split = load_split(config)?;
    let (ck, log) = train_on_fit(&config.train, &split)?;
    save_checkpoint(out.join(MODEL_FILE), &ck)?;
    write_text(&out.join(TRAINING_LOG_FILE), &training_log_csv(&log))
}

fn row_status_csv(outcome: &SteeringOutcome) -> String {
    let mut out = String::from("row,status,t\n");
    for (i, s) in outcome.status.iter().enumerate() {
        let t = match s {
            fmsteer::steering::RowStatus::Ok => 1.0,
            fmsteer::steering::RowStatus::Diverged { t } | fmsteer::steering::RowStatus::StepLimit { t } => *t,
        };
        writeln!(out, "{i},{},{t}", s.label()).unwrap();
    }
    out
}

/// Trajectory states are in the source-normalized flow space.
fn trajectories_csv(outcome: &SteeringOutcome, d: usize) -> String {
    let mut out = String::from("row,step,t");
    for k in 0..d {
        write!(out, ",z{k}").unwrap();
    }
    out.push('\n');
    for (i, tr) in outcome.trajectories.iter().flatten().enumerate() {
        let Some(tr) = tr else { continue };
        for (step, &t) in tr.times.iter().enumerate() {
            write!(out, "{i},{step},{t}").unwrap();
            for v in tr.states.row(step) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Steers every row of `input`. Always writes the per-row status; writes
/// the steered set only when no row failed, and reports failures as a
/// numerical error.
pub fn cmd_steer(opts: &SteerOptions, checkpoint: &Path, input: &Path, out: &Path) -> Result<SteeringOutcome> {
    let ck = load_checkpoint(checkpoint)?;
    let set = read_repset(input)?;
    let outcome = flow_steer(&ck, set.data(), opts)?;
    write_text(&out.join(ROW_STATUS_FILE), &row_status_csv(&outcome))?;
    if outcome.trajectories.is_some() {
        write_text(&out.join(TRAJECTORIES_FILE), &trajectories_csv(&outcome, ck.data_dim()))?;
    }
    let steered = outcome.steered_set()?;
    write_repset(&steered, out.join(STEERED_FILE))?;
    Ok(outcome)
}

pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<AlignmentReport> {
    let (s, t) = config.data.load()?;
    let ck = checkpoint.map(load_checkpoint).transpose()?;
    let report = alignment_experiment(
        s.data(),
        t.data(),
        &config.train,
        &config.alignment_config(),
        ck.as_ref(),
    )?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_text(&out.join(REPORT_JSON_FILE), &json)?;
    write_text(&out.join(REPORT_CSV_FILE), &report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub norm: NormMethod,
    pub loss: LossMode,
    pub guidance: bool,
    /// Training and every steered row stayed finite.
    pub finite: bool,
    pub fid: f64,
    pub mmd: f64,
    pub kid: f64,
    /// Why the row is not finite, if it is not.
    pub failure: Option<String>,
}

fn nan_metrics() -> MetricValues {
    MetricValues {
        mmd: f64::NAN,
        fid: f64::NAN,
        kid: f64::NAN,
    }
}

/// Metrics of `outcome`'s surviving rows against `target`; NaN when fewer
/// than two rows survive or a metric breaks down numerically.
fn metrics_of_ok_rows(config: &RunConfig, outcome: &SteeringOutcome, target: &Matrix, mmd_var: f64) -> MetricValues {
    let ok = outcome.steered.select_rows(&outcome.ok_indices());
    if ok.rows() < 2 {
        return nan_metrics();
    }
    all_metrics(&ok, target, &config.metrics, mmd_var).unwrap_or_else(|_| nan_metrics())
}

fn resolved_mmd_var(config: &RunConfig, split: &Split) -> Result<f64> {
    Ok(match config.metrics.mmd_var.value() {
        Some(v) => v,
        None => mmd_auto_var(&split.source_held, &split.target_held)?,
    })
}

/// Every {z-score, median-IQR} × {MSE, Huber} × {guided, unguided}
/// combination on the configured data. Numerical breakdown is reported in
/// the rows, never raised.
pub fn run_ablation(config: &RunConfig) -> Result<Vec<AblationRow>> {
    let split = load_split(config)?;
    let mmd_var = resolved_mmd_var(config, &split)?;
    let mut rows = Vec::new();
    for norm in [NormMethod::Zscore, NormMethod::MedianIqr] {
        for loss in [LossMode::Mse, LossMode::Huber] {
            let train_config = TrainingConfig {
                normalization: norm,
                loss,
                ..config.train.clone()
            };
            let trained = match train_on_fit(&train_config, &split) {
                Ok(t) => Ok(t),
                Err(e) if is_numerical(&e) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            for guidance in [true, false] {
                let row = |finite: bool, m: MetricValues, failure: Option<String>| AblationRow {
                    norm,
                    loss,
                    guidance,
                    finite,
                    fid: m.fid,
                    mmd: m.mmd,
                    kid: m.kid,
                    failure,
                };
                let ck = match &trained {
                    Ok((ck, _)) => ck,
                    Err(msg) => {
                        rows.push(row(false, nan_metrics(), Some(msg.clone())));
                        continue;
                    }
                };
                let opts = SteerOptions {
                    unguided: !guidance,
                    ..config.steer_options()
                };
                let outcome = flow_steer(ck, &split.source_held, &opts)?;
                let m = metrics_of_ok_rows(config, &outcome, &split.target_held, mmd_var);
                let failed = outcome.n_failed();
                let failure = (failed > 0).then(|| format!("{failed} rows diverged during steering"));
                rows.push(row(failed == 0 && ck.params.all_finite(), m, failure));
            }
        }
    }
    Ok(rows)
}

fn norm_label(n: NormMethod) -> &'static str {
    match n {
        NormMethod::Zscore => "z-score",
        NormMethod::MedianIqr => "median-iqr",
    }
}

fn loss_label(l: LossMode) -> &'static str {
    match l {
        LossMode::Mse => "mse",
        LossMode::Huber => "huber",
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("norm,loss,guidance,finite,fid,mmd,kid\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            norm_label(r.norm),
            loss_label(r.loss),
            if r.guidance { "on" } else { "off" },
            r.finite,
            r.fid,
            r.mmd,
            r.kid
        )
        .unwrap();
    }
    out
}

pub fn cmd_ablate(config: &RunConfig, out: &Path) -> Result<Vec<AblationRow>> {
    let rows = run_ablation(config)?;
    write_text(&out.join(ABLATION_FILE), &ablation_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub n_diverged: usize,
    pub fid: f64,
    pub mmd: f64,
    pub kid: f64,
    /// Mean log density of the steered rows under the target Gaussian fit.
    pub mean_target_loglik: f64,
}

/// Trains once, then steers the held-out source at every grid strength.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    let split = load_split(config)?;
    let mmd_var = resolved_mmd_var(config, &split)?;
    let (ck, _) = train_on_fit(&config.train, &split)?;
    let mut rows = Vec::new();
    for &eta in &config.guidance.sweep_grid {
        let opts = SteerOptions {
            eta,
            unguided: false,
            ..config.steer_options()
        };
        let outcome = flow_steer(&ck, &split.source_held, &opts)?;
        let m = metrics_of_ok_rows(config, &outcome, &split.target_held, mmd_var);
        let ok = outcome.steered.select_rows(&outcome.ok_indices());
        let loglik = if ok.rows() > 0 {
            mean_target_log_likelihood(&ck, &ok)?
        } else {
            f64::NAN
        };
        rows.push(SweepRow {
            eta,
            n_diverged: outcome.n_failed(),
            fid: m.fid,
            mmd: m.mmd,
            kid: m.kid,
            mean_target_loglik: loglik,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eta,n_diverged,fid,mmd,kid,mean_target_loglik\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.eta, r.n_diverged, r.fid, r.mmd, r.kid, r.mean_target_loglik
        )
        .unwrap();
    }
    out
}

pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(config)?;
    write_text(&out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    Ok(rows)
}

/// True when the error chain contains a numerical breakdown.
pub fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain()
        .any(|e| e.downcast_ref::<Error>().is_some_and(Error::is_numerical))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
