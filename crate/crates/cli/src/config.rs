//! The JSON run configuration shared by every subcommand.
//!
//! A config on disk may omit any field. Loading fills defaults, copies the
//! top-level `seed` into every seed slot the file left unset, and expands
//! scenario vectors, so the persisted `resolved_config.json` reproduces the
//! run with no further defaulting.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fmsteer::dataio::{gen_scenario, read_repset, RepresentationSet, Role, Scenario, ScenarioSpec};
use fmsteer::evaluation::MetricConfig;
use fmsteer::flow::TrainingConfig;
use fmsteer::ode::SolverConfig;
use fmsteer::steering::{AlignmentConfig, SteerOptions};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CONFIG_VERSION: u32 = 1;
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    /// Fallback for every seed the file leaves unset.
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainingConfig,
    pub guidance: GuidanceConfig,
    pub solver: SolverConfig,
    pub metrics: MetricConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            seed: 0,
            data: DataConfig::default(),
            train: TrainingConfig::default(),
            guidance: GuidanceConfig::default(),
            solver: SolverConfig::default(),
            metrics: MetricConfig::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Where the source and target sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Scenario {
        #[serde(default = "Scenario::anisotropic")]
        scenario: Scenario,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Files {
        source: PathBuf,
        target: PathBuf,
    },
}

fn default_d() -> usize {
    2
}

fn default_n() -> usize {
    4000
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Scenario {
            scenario: Scenario::anisotropic(),
            d: default_d(),
            n: default_n(),
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn scenario_spec(&self) -> Option<ScenarioSpec> {
        match self {
            DataConfig::Scenario { scenario, d, n, seed } => Some(ScenarioSpec::new(scenario.clone(), *d, *n, *seed)),
            DataConfig::Files { .. } => None,
        }
    }

    /// Generates or reads the `(source, target)` pair.
    pub fn load(&self) -> Result<(RepresentationSet, RepresentationSet)> {
        match self {
            DataConfig::Scenario { .. } => Ok(gen_scenario(&self.scenario_spec().unwrap())?),
            DataConfig::Files { source, target } => {
                let s = read_repset(source).with_context(|| format!("reading {}", source.display()))?;
                let t = read_repset(target).with_context(|| format!("reading {}", target.display()))?;
                if s.role() != Role::Source || t.role() != Role::Target {
                    bail!("data files must hold a source set and a target set, in that order");
                }
                Ok((s, t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub eta: f64,
    pub unguided: bool,
    /// Guidance strengths visited by `sweep`.
    pub sweep_grid: Vec<f64>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            unguided: false,
            sweep_grid: vec![0.85, 0.90, 1.00, 1.10, 1.15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub holdout_fraction: f64,
    pub split_seed: u64,
    /// Linear steering strength.
    pub gamma: f64,
    pub skip_diverged: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let a = AlignmentConfig::default();
        Self {
            holdout_fraction: a.holdout_fraction,
            split_seed: a.split_seed,
            gamma: a.gamma,
            skip_diverged: a.skip_diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("fmsteer-out"),
        }
    }
}

impl RunConfig {
    /// Parses, seeds, defaults and validates a config document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let root = doc.as_object_mut().context("config must be a JSON object")?;
        match root.get("config_version") {
            Some(v) if v.as_u64() == Some(CONFIG_VERSION as u64) => {}
            Some(v) => bail!("unsupported config_version {v}; expected {CONFIG_VERSION}"),
            None => bail!("config_version is required (expected {CONFIG_VERSION})"),
        }
        let seed = match root.get("seed") {
            Some(v) => v.as_u64().context("seed must be a non-negative integer")?,
            None => 0,
        };
        fill_seed(root, "data", "seed", seed);
        fill_seed(root, "train", "seed", seed);
        fill_seed(root, "eval", "split_seed", seed);
        let config: RunConfig = serde_json::from_value(doc).context("invalid config")?;
        config.resolved()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json_str(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Expands defaulted scenario vectors and checks every section.
    pub fn resolved(mut self) -> Result<Self> {
        if self.config_version != CONFIG_VERSION {
            bail!("unsupported config_version {}", self.config_version);
        }
        if let DataConfig::Scenario { scenario, d, n, seed } = &self.data {
            let spec = ScenarioSpec::new(scenario.clone(), *d, *n, *seed).resolved()?;
            self.data = DataConfig::Scenario {
                scenario: spec.scenario,
                d: spec.d,
                n: spec.n,
                seed: spec.seed,
            };
        }
        self.train.validate()?;
        self.solver.validate()?;
        self.metrics.validate()?;
        if !self.guidance.eta.is_finite() || self.guidance.sweep_grid.iter().any(|e| !e.is_finite()) {
            bail!("guidance strengths must be finite");
        }
        let f = self.eval.holdout_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("eval.holdout_fraction must be in (0, 1), got {f}");
        }
        if !self.eval.gamma.is_finite() {
            bail!("eval.gamma must be finite");
        }
        Ok(self)
    }

    pub fn steer_options(&self) -> SteerOptions {
        SteerOptions {
            eta: self.guidance.eta,
            unguided: self.guidance.unguided,
            solver: self.solver.clone(),
        }
    }

    pub fn alignment_config(&self) -> AlignmentConfig {
        AlignmentConfig {
            holdout_fraction: self.eval.holdout_fraction,
            split_seed: self.eval.split_seed,
            gamma: self.eval.gamma,
            steer: self.steer_options(),
            metrics: self.metrics.clone(),
            skip_diverged: self.eval.skip_diverged,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}

/// Sets `root[section][key] = seed` unless the file already set it. A
/// missing section becomes an object so the default is recorded.
fn fill_seed(root: &mut serde_json::Map<String, Value>, section: &str, key: &str, seed: u64) {
    if section == "data" {
        // Only scenario data has a seed; file-backed data must not get one.
        let is_files = root
            .get(section)
            .and_then(|d| d.get("kind"))
            .is_some_and(|k| k.as_str() == Some("files"));
        if is_files {
            return;
        }
        if !root.contains_key(section) {
            let mut default = serde_json::to_value(DataConfig::default()).expect("data serializes");
            default.as_object_mut().expect("data is an object").remove(key);
            root.insert(section.to_string(), default);
        }
    }
    let entry = root.entry(section).or_insert_with(|| Value::Object(Default::default()));
    if let Some(obj) = entry.as_object_mut() {
        obj.entry(key).or_insert(Value::from(seed));
    }
}
