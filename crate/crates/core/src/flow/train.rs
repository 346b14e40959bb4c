use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{cfm_loss_and_grad, LossMode, PairBatch};
use super::mlp::{FlowModelParams, MlpArchitecture};
use crate::coupling::{make_pairing, CouplingConfig, CouplingMode};
use crate::dataio::RepresentationSet;
use crate::error::{Error, Result};
use crate::guidance::{fit_guidance_stats, GuidanceStats};
use crate::normalization::{NormMethod, NormalizationStats};
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub loss: LossMode,
    pub coupling: CouplingMode,
    pub normalization: NormMethod,
    /// Hidden widths; `None` means two layers of width `2d`.
    pub hidden_dims: Option<Vec<usize>>,
    /// Loss log granularity in iterations.
    pub log_every: usize,
    pub sinkhorn: CouplingConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            iterations: 5000,
            learning_rate: 1e-4,
            loss: LossMode::Huber,
            coupling: CouplingMode::OtSampled,
            normalization: NormMethod::MedianIqr,
            hidden_dims: None,
            log_every: 100,
            sinkhorn: CouplingConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, d: usize) -> Result<MlpArchitecture> {
        match &self.hidden_dims {
            Some(h) => MlpArchitecture::new(d, h.clone()),
            None => MlpArchitecture::default_for(d),
        }
    }
}

/// Mean training loss over one logging window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Last iteration (1-based) included in the window.
    pub iteration: usize,
    pub mean_loss: f64,
}

/// Everything inference needs, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: FlowModelParams,
    pub source_norm: NormalizationStats,
    pub target_norm: NormalizationStats,
    pub guidance: GuidanceStats,
}

impl Checkpoint {
    pub fn data_dim(&self) -> usize {
        self.params.data_dim()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogEntry>,
}

/// Fits both normalizers, then runs minibatch flow matching with Adam.
///
/// RNG consumption per iteration, from one stream seeded with
/// `config.seed` (after parameter initialization): source batch indices,
/// target batch indices, the pairing, then one `t` per pair.
pub fn train(config: &TrainingConfig, source: &RepresentationSet, target: &RepresentationSet) -> Result<TrainOutput> {
    config.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            context: "train source/target dims",
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let d = source.dim();
    let source_norm = NormalizationStats::fit(config.normalization, source)?;
    let target_norm = NormalizationStats::fit(config.normalization, target)?;
    let xs = source_norm.transform(source.data())?;
    let xt = target_norm.transform(target.data())?;
    let guidance = fit_guidance_stats(&xs, &xt)?;

    let arch = config.architecture(d)?;
    let mut rng = RngState::new(config.seed);
    let mut params = FlowModelParams::init(&arch, &mut rng)?;
    let mut adam = AdamState::new(&params, config.learning_rate);

    let b = config.batch_size;
    let mut log = Vec::new();
    let mut window = 0.0;
    let mut window_len = 0;
    for it in 1..=config.iterations {
        let si: Vec<usize> = (0..b).map(|_| rng.index(xs.rows())).collect();
        let ti: Vec<usize> = (0..b).map(|_| rng.index(xt.rows())).collect();
        let b0 = xs.select_rows(&si);
        let b1 = xt.select_rows(&ti);
        let pairing = make_pairing(&b0, &b1, config.coupling, &config.sinkhorn, &mut rng)?;
        let x0: Vec<usize> = pairing.pairs.iter().map(|p| p.0).collect();
        let x1: Vec<usize> = pairing.pairs.iter().map(|p| p.1).collect();
        let t: Vec<f64> = (0..b).map(|_| rng.uniform()).collect();
        let batch = PairBatch::new(b0.select_rows(&x0), b1.select_rows(&x1), t)?;

        let (loss, grads) = match cfm_loss_and_grad(&params, &batch, config.loss) {
            Ok(v) => v,
            Err(Error::NonFiniteForward(_)) => return Err(Error::NonFiniteLoss(it)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        adam.step(&mut params, &grads)?;
        if !params.all_finite() {
            return Err(Error::NonFiniteLoss(it));
        }

        window += loss;
        window_len += 1;
        if it % config.log_every == 0 || it == config.iterations {
            log.push(LogEntry {
                iteration: it,
                mean_loss: window / window_len as f64,
            });
            window = 0.0;
            window_len = 0;
        }
    }

    Ok(TrainOutput {
        checkpoint: Checkpoint {
            params,
            source_norm,
            target_norm,
            guidance,
        },
        log,
    })
}
