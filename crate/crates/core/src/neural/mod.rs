//! Fully-connected networks with a flat parameter layout.
//!
//! Three networks share this machinery: the per-geometry temperature PINN
//! (tanh), the supervised magnetic surrogate mNN (cubic relu), and the
//! hypernetwork tHNN (relu) that emits PINN weights. Parameters live in a
//! single flat vector laid out per layer as row-major weights followed by
//! biases, which serializes bit-exactly and is what the hypernetwork emits.

mod io;
mod jets;

pub use io::{decode_params, encode_params, ModelFile};
pub use jets::{
    backprop_params, forward_batch, forward_jet1, forward_jet2, jet1_backward, jet2_backward,
    JetWorkspace,
};

use crate::autodiff::{Node, TapeBuilder};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("a network needs at least two layers, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    EmptyLayer,
    #[error("input width mismatch: spec expects {expected}, got {got}")]
    InputWidthMismatch { expected: usize, got: usize },
    #[error("parameter vector length {got} does not match spec ({expected})")]
    ParamLengthMismatch { expected: usize, got: usize },
    #[error("output transform scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
}

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    /// `max(0, x^3)`: twice continuously differentiable at the origin.
    CubicRelu,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self, NeuralError> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "cubic-relu" => Ok(Activation::CubicRelu),
            other => Err(NeuralError::UnknownActivation(other.to_string())),
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::CubicRelu => {
                if z > 0.0 {
                    z * z * z
                } else {
                    0.0
                }
            }
        }
    }

    /// Value and first derivative.
    #[inline]
    pub fn apply_d1(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::CubicRelu => {
                if z > 0.0 {
                    (z * z * z, 3.0 * z * z)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    /// Twice differentiable everywhere (what the second-order jets require).
    pub fn is_smooth(self) -> bool {
        matches!(self, Activation::Tanh)
    }
}

/// Shape of a fully-connected network: layer widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, activation: Activation) -> Result<Self, NeuralError> {
        if layers.len() < 2 {
            return Err(NeuralError::TooFewLayers(layers.len()));
        }
        if layers.iter().any(|&n| n == 0) {
            return Err(NeuralError::EmptyLayer);
        }
        Ok(MlpSpec { layers, activation })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layers.last().unwrap()
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s block (weights then biases) in the flat vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layers
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Flat parameter vector. Layout: for each layer, weights in row-major order
/// (`w[out][in]`) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector {
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Borrowed view of one layer's weights and biases.
#[derive(Clone, Copy)]
pub struct LayerView<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub n_in: usize,
    pub n_out: usize,
}

/// Iterates the layers of a flat parameter slice according to `spec`.
pub fn layer_views<'a>(spec: &'a MlpSpec, params: &'a [f64]) -> impl Iterator<Item = LayerView<'a>> {
    debug_assert_eq!(params.len(), spec.param_count());
    let mut offset = 0usize;
    spec.layers.windows(2).map(move |wnd| {
        let (n_in, n_out) = (wnd[0], wnd[1]);
        let w = &params[offset..offset + n_in * n_out];
        let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        LayerView { w, b, n_in, n_out }
    })
}

/// Glorot-uniform weights (bound `sqrt(6/(fan_in+fan_out))`), zero biases.
/// Deterministic for a given seed.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for wnd in spec.layers.windows(2) {
        let (n_in, n_out) = (wnd[0], wnd[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        for _ in 0..n_in * n_out {
            values.push(rng.gen_range(-bound..bound));
        }
        values.extend(std::iter::repeat(0.0).take(n_out));
    }
    ParamVector { values }
}

/// Plain forward pass. `input` width must match the spec.
pub fn forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if input.len() != spec.input_width() {
        return Err(NeuralError::InputWidthMismatch {
            expected: spec.input_width(),
            got: input.len(),
        });
    }
    if params.len() != spec.param_count() {
        return Err(NeuralError::ParamLengthMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    let n_layers = spec.n_layers();
    let mut act = input.to_vec();
    for (l, layer) in layer_views(spec, params).enumerate() {
        let mut next = vec![0.0; layer.n_out];
        for o in 0..layer.n_out {
            let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
            let mut z = layer.b[o];
            for (wi, ai) in row.iter().zip(&act) {
                z += wi * ai;
            }
            next[o] = if l + 1 < n_layers {
                spec.activation.apply(z)
            } else {
                z
            };
        }
        act = next;
    }
    Ok(act)
}

/// Affine output map of the temperature network: `T = a + b·N(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputTransform {
    /// Offset, a reference average temperature in °C.
    pub a: f64,
    /// Positive scale in °C.
    pub b: f64,
}

impl OutputTransform {
    pub fn new(a: f64, b: f64) -> Result<Self, NeuralError> {
        if b <= 0.0 {
            return Err(NeuralError::NonPositiveScale(b));
        }
        Ok(OutputTransform { a, b })
    }

    #[inline]
    pub fn apply(&self, n: f64) -> f64 {
        self.a + self.b * n
    }
}

/// Per-input affine map onto `[-1, 1]` used before every network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaling {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| b > a));
        InputScaling { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn scale(&self, k: usize, x: f64) -> f64 {
        2.0 * (x - self.lo[k]) / (self.hi[k] - self.lo[k]) - 1.0
    }

    /// d(scaled)/d(raw) for input `k`; constant because the map is affine.
    #[inline]
    pub fn slope(&self, k: usize) -> f64 {
        2.0 / (self.hi[k] - self.lo[k])
    }

    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.scale(k, raw[k]);
        }
    }
}

/// Definition of a temperature network: everything except its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TePinnDef {
    pub spec: MlpSpec,
    pub scaling: InputScaling,
    pub transform: OutputTransform,
}

impl TePinnDef {
    /// Predicted temperature at a physical position (meters).
    /// Positions outside the scaling box extrapolate; callers that care log it.
    pub fn predict_temperature(&self, params: &[f64], x: f64, y: f64) -> Result<f64, NeuralError> {
        let u = [self.scaling.scale(0, x), self.scaling.scale(1, y)];
        let out = forward(&self.spec, params, &u)?;
        Ok(self.transform.apply(out[0]))
    }
}

/// Records a forward pass of the raw network on an autodiff tape.
///
/// `input_nodes` and `param_nodes` are tape nodes (typically tape inputs) for
/// the network inputs and the flat parameter vector. Returns the output
/// nodes. This is the slow general path used by oracle tests; training uses
/// the jet kernels.
pub fn record_forward(
    spec: &MlpSpec,
    b: &mut TapeBuilder,
    input_nodes: &[Node],
    param_nodes: &[Node],
) -> Result<Vec<Node>, NeuralError> {
    if input_nodes.len() != spec.input_width() {
        return Err(NeuralError::InputWidthMismatch {
            expected: spec.input_width(),
            got: input_nodes.len(),
        });
    }
    if param_nodes.len() != spec.param_count() {
        return Err(NeuralError::ParamLengthMismatch {
            expected: spec.param_count(),
            got: param_nodes.len(),
        });
    }
    let n_layers = spec.n_layers();
    let mut act: Vec<Node> = input_nodes.to_vec();
    let mut offset = 0usize;
    for (l, wnd) in spec.layers.windows(2).enumerate() {
        let (n_in, n_out) = (wnd[0], wnd[1]);
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut z = param_nodes[offset + n_in * n_out + o];
            for (i, &a) in act.iter().enumerate() {
                let t = b.mul(param_nodes[offset + o * n_in + i], a);
                z = b.add(z, t);
            }
            let out = if l + 1 < n_layers {
                match spec.activation {
                    Activation::Tanh => b.tanh(z),
                    Activation::Relu => b.relu(z),
                    // max(0, z^3) == relu(z)^3 because cubing is monotone
                    Activation::CubicRelu => {
                        let r = b.relu(z);
                        b.powi(r, 3)
                    }
                }
            } else {
                z
            };
            next.push(out);
        }
        offset += n_in * n_out + n_out;
        act = next;
    }
    Ok(act)
}
