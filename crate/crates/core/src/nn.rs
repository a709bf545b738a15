//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Batches are rows of an `Array2` (batch x features). Weight matrices are
//! stored `out x in`, so a layer computes `Y = act(X W^T + b)`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer inputs and outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("non-empty network")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Mlp {
    /// He-uniform weights for relu layers, Xavier-uniform otherwise; zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, spec: &[(usize, Activation)], rng: &mut R) -> Result<Self> {
        if spec.is_empty() || input_dim == 0 || spec.iter().any(|&(n, _)| n == 0) {
            return Err(Error::EmptySpec);
        }
        let mut layers = Vec::with_capacity(spec.len());
        let mut fan_in = input_dim;
        for &(fan_out, activation) in spec {
            let bound = match activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
            layers.push(Layer {
                weights,
                biases: Array1::zeros(fan_out),
                activation,
            });
            fan_in = fan_out;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptySpec);
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.outputs() {
                return Err(Error::Shape(format!("layer {i}: bias length {} != {}", l.biases.len(), l.outputs())));
            }
            if i > 0 && l.inputs() != layers[i - 1].outputs() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs, previous layer yields {}",
                    l.inputs(),
                    layers[i - 1].outputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let y = affine(&layer.weights, &layer.biases, x.view(), layer.activation);
            inputs.push(x);
            x = y.clone();
            outputs.push(y);
        }
        Ok((x, ForwardCache { inputs, outputs }))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut x = affine(&self.layers[0].weights, &self.layers[0].biases, input, self.layers[0].activation);
        for layer in &self.layers[1..] {
            x = affine(&layer.weights, &layer.biases, x.view(), layer.activation);
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(x)?.into_raw_vec_and_offset().0)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!("input has {cols} features, network expects {}", self.input_dim())));
        }
        Ok(())
    }

    /// Gradients of `sum(output_gradient .* output)` with respect to every
    /// parameter and to the input. Batch rows are summed, not averaged.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<'_, f64>) -> GradientSet {
        self.backward_impl(cache, output_gradient, true)
    }

    /// Like [`Mlp::backward`] but only the input gradient is filled; parameter
    /// gradient vectors are left empty.
    pub fn input_gradient(&self, cache: &ForwardCache, output_gradient: ArrayView2<'_, f64>) -> Array2<f64> {
        self.backward_impl(cache, output_gradient, false).input
    }

    fn backward_impl(&self, cache: &ForwardCache, output_gradient: ArrayView2<'_, f64>, params: bool) -> GradientSet {
        assert_eq!(cache.outputs.len(), self.layers.len(), "stale forward cache");
        assert_eq!(output_gradient.dim(), cache.output().dim(), "output gradient shape");
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(if params { n } else { 0 });
        let mut biases = Vec::with_capacity(if params { n } else { 0 });
        let mut grad = output_gradient.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.outputs[i];
            assert_eq!(y.ncols(), layer.outputs(), "stale forward cache");
            if layer.activation != Activation::Linear {
                Zip::from(&mut grad)
                    .and(y)
                    .for_each(|g, &y| *g *= layer.activation.derivative_from_output(y));
            }
            if params {
                weights.push(grad.t().dot(&cache.inputs[i]));
                biases.push(grad.sum_axis(Axis(0)));
            }
            grad = grad.dot(&layer.weights);
        }
        weights.reverse();
        biases.reverse();
        GradientSet {
            weights,
            biases,
            input: grad,
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.activation == b.activation)
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    /// Inverse of [`Mlp::flat_params`].
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape(format!("{} values for {} parameters", values.len(), self.num_parameters())));
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }
}

impl GradientSet {
    /// Parameter gradients in [`Mlp::flat_params`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

fn affine(w: &Array2<f64>, b: &Array1<f64>, x: ArrayView2<'_, f64>, act: Activation) -> Array2<f64> {
    let mut z = x.dot(&w.t());
    z += b;
    if act != Activation::Linear {
        z.mapv_inplace(|v| act.apply(v));
    }
    z
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        let zw = || mlp.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect::<Vec<_>>();
        let zb = || mlp.layers.iter().map(|l| Array1::zeros(l.biases.len())).collect::<Vec<_>>();
        Self {
            config,
            m_w: zw(),
            v_w: zw(),
            m_b: zb(),
            v_b: zb(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one descent step (`theta -= lr * m_hat / (sqrt(v_hat) + eps)`).
pub fn adam_step(mlp: &mut Mlp, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    if grads.weights.len() != mlp.layers.len() || state.m_w.len() != mlp.layers.len() {
        return Err(Error::Shape("gradient set does not match network".into()));
    }
    for (l, (gw, gb)) in mlp.layers.iter().zip(grads.weights.iter().zip(&grads.biases)) {
        if gw.dim() != l.weights.dim() || gb.len() != l.biases.len() {
            return Err(Error::Shape("gradient set does not match network".into()));
        }
    }
    let finite = grads
        .weights
        .iter()
        .all(|g| g.iter().all(|v| v.is_finite()))
        && grads.biases.iter().all(|g| g.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::Diverged("non-finite gradient".into()));
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for (i, layer) in mlp.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&mut state.m_w[i])
            .and(&mut state.v_w[i])
            .and(&grads.weights[i])
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut layer.biases)
            .and(&mut state.m_b[i])
            .and(&mut state.v_b[i])
            .and(&grads.biases[i])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}

/// `target <- (1 - tau) target + tau online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape("soft update between different architectures".into()));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        Zip::from(&mut t.biases)
            .and(&o.biases)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
    }
    Ok(())
}

/// Portable weight document. Floats are written with shortest round-trip
/// formatting and parsed with correct rounding, so a round trip is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpDocument {
    pub schema_version: u32,
    pub layers: Vec<LayerDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// Row-major, `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Mlp {
    pub fn to_document(&self) -> MlpDocument {
        MlpDocument {
            schema_version: SCHEMA_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &MlpDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: doc.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let layers = doc
            .layers
            .iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.outputs, l.inputs), l.weights.clone())
                    .map_err(|e| Error::Shape(format!("weights: {e}")))?;
                if l.biases.len() != l.outputs {
                    return Err(Error::Shape(format!("biases: {} != {}", l.biases.len(), l.outputs)));
                }
                Ok(Layer {
                    weights,
                    biases: Array1::from(l.biases.clone()),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn serialize(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("weight document serializes")
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let doc: MlpDocument = serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}
