use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// GAN-convention slope used when a config asks for LeakyReLU without one.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slope", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    z
                } else {
                    s * z
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Transform applied to the last layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    SoftmaxCrossEntropy,
    SigmoidBce,
    Linear,
}

/// Layer widths, per-layer activation and batch-norm flags, and the output head.
///
/// Layer `l` maps `layer_dims[l]` to `layer_dims[l + 1]`; batch-norm (when set)
/// sits between the affine map and the activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    batch_norm: Vec<bool>,
    output_head: OutputHead,
}

/// Offsets of one layer's parameters inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: usize,
    /// Absent on batch-normalized layers, where beta plays the same role.
    pub bias: Option<usize>,
    /// `(gamma, beta)` offsets for batch-normalized layers.
    pub norm: Option<(usize, usize)>,
}

impl ArchSpec {
    pub fn new(
        layer_dims: Vec<usize>,
        activations: Vec<Activation>,
        batch_norm: Vec<bool>,
        output_head: OutputHead,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::precondition("an architecture needs at least two layer dims"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::precondition("layer dims must be positive"));
        }
        let layers = layer_dims.len() - 1;
        if activations.len() != layers {
            return Err(Error::Shape {
                context: "activation list",
                expected: layers,
                found: activations.len(),
            });
        }
        if batch_norm.len() != layers {
            return Err(Error::Shape {
                context: "batch-norm flags",
                expected: layers,
                found: batch_norm.len(),
            });
        }
        for a in &activations {
            if let Activation::LeakyRelu(s) = a {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(Error::precondition(format!(
                        "LeakyReLU slope {s} outside (0, 1)"
                    )));
                }
            }
        }
        if matches!(output_head, OutputHead::SoftmaxCrossEntropy | OutputHead::SigmoidBce)
            && activations[layers - 1] != Activation::Identity
        {
            return Err(Error::precondition(
                "softmax/sigmoid heads require an identity activation on the last layer",
            ));
        }
        Ok(Self {
            layer_dims,
            activations,
            batch_norm,
            output_head,
        })
    }

    /// Hidden layers share `hidden` activation; the last layer is identity
    /// unless the head is `Linear`, in which case `last` is used.
    pub fn mlp(
        dims: &[usize],
        hidden: Activation,
        last: Activation,
        batch_norm_hidden: bool,
        output_head: OutputHead,
    ) -> Result<Self> {
        let layers = dims.len().saturating_sub(1);
        let activations = (0..layers)
            .map(|l| if l + 1 == layers { last } else { hidden })
            .collect();
        let batch_norm = (0..layers).map(|l| batch_norm_hidden && l + 1 < layers).collect();
        Self::new(dims.to_vec(), activations, batch_norm, output_head)
    }

    /// Softmax classifier with ReLU hidden layers and no batch-norm.
    pub fn classifier(dims: &[usize]) -> Result<Self> {
        Self::mlp(
            dims,
            Activation::Relu,
            Activation::Identity,
            false,
            OutputHead::SoftmaxCrossEntropy,
        )
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn batch_norm(&self) -> &[bool] {
        &self.batch_norm
    }

    pub fn output_head(&self) -> OutputHead {
        self.output_head
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layouts()
            .last()
            .map(|l| match (l.norm, l.bias) {
                (Some((_, beta)), _) => beta + l.fan_out,
                (None, Some(bias)) => bias + l.fan_out,
                (None, None) => unreachable!("unnormalized layers carry a bias"),
            })
            .unwrap_or(0)
    }

    pub(crate) fn layouts(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.num_layers());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let weight = offset;
            offset += fan_in * fan_out;
            let (bias, norm) = if self.batch_norm[l] {
                let gamma = offset;
                offset += 2 * fan_out;
                (None, Some((gamma, gamma + fan_out)))
            } else {
                let bias = offset;
                offset += fan_out;
                (Some(bias), None)
            };
            out.push(LayerLayout {
                fan_in,
                fan_out,
                weight,
                bias,
                norm,
            });
        }
        out
    }
}

/// Flattened model parameters together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    arch: ArchSpec,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, arch: ArchSpec) -> Result<Self> {
        let expected = arch.param_count();
        if values.len() != expected {
            return Err(Error::Shape {
                context: "parameter vector",
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: 0,
                context: "parameter vector",
            });
        }
        Ok(Self { values, arch })
    }

    pub fn zeros(arch: ArchSpec) -> Self {
        Self {
            values: vec![0.0; arch.param_count()],
            arch,
        }
    }

    /// Glorot-uniform weights, zero biases, unit gamma, zero beta.
    pub fn glorot(arch: ArchSpec, rng: &mut impl rand::Rng) -> Self {
        let mut values = vec![0.0; arch.param_count()];
        for l in arch.layouts() {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut values[l.weight..l.weight + l.fan_in * l.fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            if let Some((gamma, _)) = l.norm {
                values[gamma..gamma + l.fan_out].fill(1.0);
            }
        }
        Self { values, arch }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same architecture, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.arch.clone())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
