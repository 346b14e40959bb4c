use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
}

/// `(d + 1) → hidden… → d` rectifier MLP; the extra input is the time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    pub data_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(data_dim: usize, hidden_dims: Vec<usize>) -> Result<Self> {
        let arch = Self {
            data_dim,
            hidden_dims,
            activation: Activation::Relu,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Two hidden layers of width `2d`.
    pub fn default_for(data_dim: usize) -> Result<Self> {
        Self::new(data_dim, vec![2 * data_dim, 2 * data_dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::InvalidArgument("architecture data_dim must be ≥ 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidArgument(
                "architecture needs at least one hidden layer".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer width must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + 1
    }

    pub fn output_dim(&self) -> usize {
        self.data_dim
    }

    /// `(fan_in, fan_out)` for each layer in order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim()];
        widths.extend(&self.hidden_dims);
        widths.push(self.output_dim());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer; `weights` is `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameters of the velocity field `v(x, t)`. Also used as the gradient
/// container during training.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModelParams {
    pub arch: MlpArchitecture,
    pub layers: Vec<Layer>,
}

impl FlowModelParams {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| Layer {
                weights: Matrix::zeros(fan_out, fan_in),
                bias: vec![0.0; fan_out],
            })
            .collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    /// Weights uniform in `±√(6 / fan_in)`, biases zero.
    pub fn init(arch: &MlpArchitecture, rng: &mut RngState) -> Result<Self> {
        arch.validate()?;
        let mut p = Self::zeros(arch);
        for layer in &mut p.layers {
            let bound = (6.0 / layer.weights.cols() as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        Ok(p)
    }

    pub fn data_dim(&self) -> usize {
        self.arch.data_dim
    }

    /// All parameters in checkpoint order: per layer, weights row-major then
    /// bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.arch.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn from_flat(arch: &MlpArchitecture, values: &[f64]) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter count",
                expected: arch.param_count(),
                got: values.len(),
            });
        }
        let mut p = Self::zeros(arch);
        let mut off = 0;
        for l in &mut p.layers {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&values[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&values[off..off + nb]);
            off += nb;
        }
        Ok(p)
    }

    /// Mutable views of every parameter block, in checkpoint order.
    pub(crate) fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
    }

    pub(crate) fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.data(), l.bias.as_slice()])
    }

    pub fn same_shape(&self, other: &FlowModelParams) -> bool {
        self.arch == other.arch
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols())
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Velocity at `(x, t)`.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.data_dim() {
            return Err(Error::DimensionMismatch {
                context: "flow forward input",
                expected: self.data_dim(),
                got: x.len(),
            });
        }
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow forward input"));
        }
        let out = self.forward_trace(x, t).output;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow forward output"));
        }
        Ok(out)
    }

    /// Forward pass keeping every layer's input for backpropagation.
    pub(crate) fn forward_trace(&self, x: &[f64], t: f64) -> Trace {
        let mut input = Vec::with_capacity(x.len() + 1);
        input.extend_from_slice(x);
        input.push(t);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += layer.weights.row(o).iter().zip(&input).map(|(w, a)| w * a).sum::<f64>();
            }
            if li != last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut input, z));
        }
        Trace { inputs, output: input }
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output` for one sample.
    pub(crate) fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut FlowModelParams) {
        let mut delta = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.inputs[li];
            let g = &mut grads.layers[li];
            for (o, &dlo) in delta.iter().enumerate() {
                if dlo == 0.0 {
                    continue;
                }
                g.bias[o] += dlo;
                for (gw, a) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *gw += dlo * a;
                }
            }
            if li == 0 {
                break;
            }
            // The previous layer's output is this layer's input, post-ReLU;
            // a zero there means the rectifier was inactive.
            let mut prev = vec![0.0; input.len()];
            for (o, &dlo) in delta.iter().enumerate() {
                if dlo == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(layer.weights.row(o)) {
                    *p += dlo * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

pub(crate) struct Trace {
    /// Input to each layer; `inputs[0]` is `[x; t]`.
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Point on the straight path `t·x1 + (1 − t)·x0`.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    if x0.len() != x1.len() {
        return Err(Error::DimensionMismatch {
            context: "interpolate",
            expected: x0.len(),
            got: x1.len(),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("interpolation time {t} outside [0, 1]")));
    }
    Ok(x0.iter().zip(x1).map(|(a, b)| t * b + (1.0 - t) * a).collect())
}
