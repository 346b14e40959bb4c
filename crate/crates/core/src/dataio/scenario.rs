//! Synthetic source/target pairs that reproduce the pathologies the robust
//! training and guidance machinery is built for.
//!
//! Every scenario draws from a single [`RngState`] seeded with
//! `ScenarioSpec::seed`, in this order: the source set's base Gaussian
//! draws, the target set's base Gaussian draws, then any scenario-specific
//! extras (mixture assignments, outlier masks) for source and then target.

use serde::{Deserialize, Serialize};

use super::{RepresentationSet, Role};
use crate::error::{Error, Result};
use crate::numerics::{sample_standard_normal, Matrix, RngState};

/// Scenario family and its parameters. Omitted vectors take `d`-dependent
/// defaults (see each variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// Source `N(0, I)`, target `N(mean, diag(std²))`.
    /// Defaults: `mean = (5, 0, …)`, `std = (2, 0.5, 2, 0.5, …)`.
    AnisotropicShift {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default)]
        std: Option<Vec<f64>>,
    },
    /// Anisotropic-shift data where, in both sets, the listed dimensions
    /// are multiplied by `outlier_scale` on each row independently with
    /// probability `outlier_prob` (1.0 scales the whole dimension).
    /// Defaults: the last two dimensions, scale 1000, probability 0.1.
    MassiveActivation {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default)]
        std: Option<Vec<f64>>,
        #[serde(default)]
        outlier_dims: Option<Vec<usize>>,
        #[serde(default = "default_outlier_scale")]
        outlier_scale: f64,
        #[serde(default = "default_outlier_prob")]
        outlier_prob: f64,
    },
    /// Two-component isotropic mixtures sharing the `shared_mean` component
    /// with weight `shared_weight`; the other component sits at
    /// `source_mean` / `target_mean`.
    /// Defaults: shared at the origin, source at `(−4, 0, …)`, target at
    /// `(4, 0, …)`, component std 1, shared weight 0.5.
    LowVelocityOverlap {
        #[serde(default)]
        shared_mean: Option<Vec<f64>>,
        #[serde(default)]
        source_mean: Option<Vec<f64>>,
        #[serde(default)]
        target_mean: Option<Vec<f64>>,
        #[serde(default = "default_component_std")]
        std: f64,
        #[serde(default = "default_shared_weight")]
        shared_weight: f64,
    },
    /// Independent diagonal Gaussians for both sets.
    CustomGaussian {
        source_mean: Vec<f64>,
        source_std: Vec<f64>,
        target_mean: Vec<f64>,
        target_std: Vec<f64>,
    },
}

fn default_outlier_scale() -> f64 {
    1000.0
}
fn default_outlier_prob() -> f64 {
    0.1
}
fn default_component_std() -> f64 {
    1.0
}
fn default_shared_weight() -> f64 {
    0.5
}

impl Scenario {
    pub fn anisotropic() -> Self {
        Scenario::AnisotropicShift { mean: None, std: None }
    }

    pub fn massive() -> Self {
        Scenario::MassiveActivation {
            mean: None,
            std: None,
            outlier_dims: None,
            outlier_scale: default_outlier_scale(),
            outlier_prob: default_outlier_prob(),
        }
    }

    pub fn low_velocity() -> Self {
        Scenario::LowVelocityOverlap {
            shared_mean: None,
            source_mean: None,
            target_mean: None,
            std: default_component_std(),
            shared_weight: default_shared_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, d: usize, n: usize, seed: u64) -> Self {
        Self { scenario, d, n, seed }
    }

    /// Fills every defaulted vector so the spec is fully explicit.
    pub fn resolved(&self) -> Result<Self> {
        let d = self.d;
        if d == 0 {
            return Err(Error::InvalidArgument("scenario d must be ≥ 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("scenario n must be ≥ 2".into()));
        }
        let shift_mean = || (0..d).map(|k| if k == 0 { 5.0 } else { 0.0 }).collect();
        let shift_std = || (0..d).map(|k| if k % 2 == 0 { 2.0 } else { 0.5 }).collect();
        let axis = |v: f64| -> Vec<f64> { (0..d).map(|k| if k == 0 { v } else { 0.0 }).collect() };
        let scenario = match &self.scenario {
            Scenario::AnisotropicShift { mean, std } => Scenario::AnisotropicShift {
                mean: Some(mean.clone().unwrap_or_else(shift_mean)),
                std: Some(std.clone().unwrap_or_else(shift_std)),
            },
            Scenario::MassiveActivation {
                mean,
                std,
                outlier_dims,
                outlier_scale,
                outlier_prob,
            } => Scenario::MassiveActivation {
                mean: Some(mean.clone().unwrap_or_else(shift_mean)),
                std: Some(std.clone().unwrap_or_else(shift_std)),
                outlier_dims: Some(
                    outlier_dims
                        .clone()
                        .unwrap_or_else(|| (d.saturating_sub(2)..d).collect()),
                ),
                outlier_scale: *outlier_scale,
                outlier_prob: *outlier_prob,
            },
            Scenario::LowVelocityOverlap {
                shared_mean,
                source_mean,
                target_mean,
                std,
                shared_weight,
            } => Scenario::LowVelocityOverlap {
                shared_mean: Some(shared_mean.clone().unwrap_or_else(|| vec![0.0; d])),
                source_mean: Some(source_mean.clone().unwrap_or_else(|| axis(-4.0))),
                target_mean: Some(target_mean.clone().unwrap_or_else(|| axis(4.0))),
                std: *std,
                shared_weight: *shared_weight,
            },
            other => other.clone(),
        };
        let spec = Self {
            scenario,
            d,
            n: self.n,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let d = self.d;
        let check_len = |name: &'static str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    context: name,
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name));
            }
            Ok(())
        };
        let check_std = |name: &'static str, v: &[f64]| -> Result<()> {
            check_len(name, v)?;
            if v.iter().any(|&s| s <= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} entries must be > 0")));
            }
            Ok(())
        };
        match &self.scenario {
            Scenario::AnisotropicShift { mean, std } => {
                check_len("scenario mean", mean.as_deref().unwrap_or_default())?;
                check_std("scenario std", std.as_deref().unwrap_or_default())?;
            }
            Scenario::MassiveActivation {
                mean,
                std,
                outlier_dims,
                outlier_scale,
                outlier_prob,
            } => {
                check_len("scenario mean", mean.as_deref().unwrap_or_default())?;
                check_std("scenario std", std.as_deref().unwrap_or_default())?;
                if !(*outlier_scale >= 1.0 && outlier_scale.is_finite()) {
                    return Err(Error::InvalidArgument("outlier_scale must be ≥ 1".into()));
                }
                if !(0.0..=1.0).contains(outlier_prob) {
                    return Err(Error::InvalidArgument("outlier_prob must be in [0, 1]".into()));
                }
                if let Some(&k) = outlier_dims.as_deref().unwrap_or_default().iter().find(|&&k| k >= d) {
                    return Err(Error::InvalidArgument(format!("outlier dim {k} ≥ d = {d}")));
                }
            }
            Scenario::LowVelocityOverlap {
                shared_mean,
                source_mean,
                target_mean,
                std,
                shared_weight,
            } => {
                check_len("shared_mean", shared_mean.as_deref().unwrap_or_default())?;
                check_len("source_mean", source_mean.as_deref().unwrap_or_default())?;
                check_len("target_mean", target_mean.as_deref().unwrap_or_default())?;
                if !(*std > 0.0 && std.is_finite()) {
                    return Err(Error::InvalidArgument("component std must be > 0".into()));
                }
                if !(0.0..=1.0).contains(shared_weight) {
                    return Err(Error::InvalidArgument("shared_weight must be in [0, 1]".into()));
                }
            }
            Scenario::CustomGaussian {
                source_mean,
                source_std,
                target_mean,
                target_std,
            } => {
                check_len("source_mean", source_mean)?;
                check_std("source_std", source_std)?;
                check_len("target_mean", target_mean)?;
                check_std("target_std", target_std)?;
            }
        }
        Ok(())
    }
}

fn diag_gaussian(rng: &mut RngState, n: usize, mean: &[f64], std: &[f64]) -> Matrix {
    let mut m = sample_standard_normal(rng, n, mean.len());
    for i in 0..n {
        for (k, v) in m.row_mut(i).iter_mut().enumerate() {
            *v = mean[k] + std[k] * *v;
        }
    }
    m
}

/// Base draws followed by component assignment: rows with `u < shared_weight`
/// are centred on `shared`, the rest on `own`.
fn two_component(rng: &mut RngState, n: usize, shared: &[f64], own: &[f64], std: f64, shared_weight: f64) -> Matrix {
    let mut m = sample_standard_normal(rng, n, shared.len());
    for i in 0..n {
        let centre = if rng.uniform() < shared_weight { shared } else { own };
        for (k, v) in m.row_mut(i).iter_mut().enumerate() {
            *v = centre[k] + std * *v;
        }
    }
    m
}

fn apply_outliers(rng: &mut RngState, m: &mut Matrix, dims: &[usize], scale: f64, prob: f64) {
    for i in 0..m.rows() {
        let hit = rng.uniform() < prob;
        if hit {
            let row = m.row_mut(i);
            for &k in dims {
                row[k] *= scale;
            }
        }
    }
}

/// Generates `(source, target)` for a scenario. Deterministic in the seed.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<(RepresentationSet, RepresentationSet)> {
    let spec = spec.resolved()?;
    let (d, n) = (spec.d, spec.n);
    let mut rng = RngState::new(spec.seed);
    let ones = vec![1.0; d];
    let zeros = vec![0.0; d];
    let (source, target) = match &spec.scenario {
        Scenario::AnisotropicShift { mean, std } => {
            let s = diag_gaussian(&mut rng, n, &zeros, &ones);
            let t = diag_gaussian(&mut rng, n, mean.as_ref().unwrap(), std.as_ref().unwrap());
            (s, t)
        }
        Scenario::MassiveActivation {
            mean,
            std,
            outlier_dims,
            outlier_scale,
            outlier_prob,
        } => {
            let mut s = diag_gaussian(&mut rng, n, &zeros, &ones);
            let mut t = diag_gaussian(&mut rng, n, mean.as_ref().unwrap(), std.as_ref().unwrap());
            let dims = outlier_dims.as_ref().unwrap();
            apply_outliers(&mut rng, &mut s, dims, *outlier_scale, *outlier_prob);
            apply_outliers(&mut rng, &mut t, dims, *outlier_scale, *outlier_prob);
            (s, t)
        }
        Scenario::LowVelocityOverlap {
            shared_mean,
            source_mean,
            target_mean,
            std,
            shared_weight,
        } => {
            let shared = shared_mean.as_ref().unwrap();
            let s = two_component(&mut rng, n, shared, source_mean.as_ref().unwrap(), *std, *shared_weight);
            let t = two_component(&mut rng, n, shared, target_mean.as_ref().unwrap(), *std, *shared_weight);
            (s, t)
        }
        Scenario::CustomGaussian {
            source_mean,
            source_std,
            target_mean,
            target_std,
        } => {
            let s = diag_gaussian(&mut rng, n, source_mean, source_std);
            let t = diag_gaussian(&mut rng, n, target_mean, target_std);
            (s, t)
        }
    };
    Ok((
        RepresentationSet::new(Role::Source, source)?,
        RepresentationSet::new(Role::Target, target)?,
    ))
}
