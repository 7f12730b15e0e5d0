use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv1d, Conv1dCache, Dense, DenseCache, Dropout, DropoutCache};
use super::recurrent::{Bidirectional, BidirectionalCache, CellKind, Recurrent, RecurrentCache};
use crate::encoder::{EncodedName, FLAT_LEN, MAX_LEN, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Activation, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    Conv1d,
    RnnCell,
    GruCell,
    LstmCell,
    Bidirectional(CellKind),
    Dropout,
    Flatten,
}

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Units for dense and recurrent layers (per direction when
    /// bidirectional), filters for convolutions.
    pub units: usize,
    pub kernel: usize,
    pub activation: Activation,
    /// Penalty `l2 * sum(w^2)` on the layer's weight matrices (not biases).
    pub l2: f64,
    pub dropout: f64,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            units: 0,
            kernel: 0,
            activation: Activation::Linear,
            l2: 0.0,
            dropout: 0.0,
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec {
            units,
            activation,
            ..Self::base(LayerKind::Dense)
        }
    }

    pub fn conv1d(filters: usize, kernel: usize, activation: Activation) -> Self {
        LayerSpec {
            units: filters,
            kernel,
            activation,
            ..Self::base(LayerKind::Conv1d)
        }
    }

    pub fn recurrent(cell: CellKind, units: usize) -> Self {
        let kind = match cell {
            CellKind::Simple => LayerKind::RnnCell,
            CellKind::Gru => LayerKind::GruCell,
            CellKind::Lstm => LayerKind::LstmCell,
        };
        LayerSpec {
            units,
            activation: Activation::Tanh,
            ..Self::base(kind)
        }
    }

    pub fn bidirectional(cell: CellKind, units: usize, l2: f64) -> Self {
        LayerSpec {
            units,
            activation: Activation::Tanh,
            l2,
            ..Self::base(LayerKind::Bidirectional(cell))
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec {
            dropout: rate,
            ..Self::base(LayerKind::Dropout)
        }
    }

    pub fn flatten() -> Self {
        Self::base(LayerKind::Flatten)
    }

    pub fn validate(&self) -> Result<()> {
        let sized = !matches!(self.kind, LayerKind::Dropout | LayerKind::Flatten);
        if sized && self.units == 0 {
            return Err(Error::ShapeMismatch(format!("{:?} layer with zero units", self.kind)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ShapeMismatch(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::ShapeMismatch(format!("negative L2 factor {}", self.l2)));
        }
        Ok(())
    }
}

/// The five network architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mlp,
    Cnn,
    Rnn,
    Gru,
    BiLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mlp,
        ModelKind::Cnn,
        ModelKind::Rnn,
        ModelKind::Gru,
        ModelKind::BiLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Gru => "gru",
            ModelKind::BiLstm => "bilstm",
        }
    }

    /// Layer stack, output head included.
    pub fn architecture(self) -> Vec<LayerSpec> {
        use Activation::*;
        match self {
            ModelKind::Mlp => vec![
                LayerSpec::flatten(),
                LayerSpec::dense(64, Relu),
                LayerSpec::dropout(0.2),
                LayerSpec::dense(128, Softplus),
                LayerSpec::dense(1, Sigmoid),
            ],
            ModelKind::Cnn => vec![
                LayerSpec::conv1d(32, 3, Relu),
                LayerSpec::conv1d(64, 3, Relu),
                LayerSpec::flatten(),
                LayerSpec::dense(64, Relu),
                LayerSpec::dense(1, Sigmoid),
            ],
            ModelKind::Rnn => vec![
                LayerSpec::recurrent(CellKind::Simple, 32),
                LayerSpec::dense(1, Sigmoid),
            ],
            ModelKind::Gru => vec![
                LayerSpec::recurrent(CellKind::Gru, 32),
                LayerSpec::dense(1, Sigmoid),
            ],
            ModelKind::BiLstm => vec![
                LayerSpec::bidirectional(CellKind::Lstm, 64, 0.002),
                LayerSpec::dropout(0.2),
                LayerSpec::dense(1, Sigmoid),
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Recurrent(Recurrent),
    Bidirectional(Bidirectional),
    Dropout(Dropout),
    Flatten,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(DenseCache),
    Conv1d(Conv1dCache),
    Recurrent(RecurrentCache),
    Bidirectional(BidirectionalCache),
    Dropout(DropoutCache),
    Flatten,
}

impl Layer {
    pub fn forward(&self, x: &Matrix, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix, LayerCache)> {
        Ok(match self {
            Layer::Dense(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dense(c))
            }
            Layer::Conv1d(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Conv1d(c))
            }
            Layer::Recurrent(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Recurrent(c))
            }
            Layer::Bidirectional(l) => {
                let (y, c) = l.run(x)?;
                (y, LayerCache::Bidirectional(c))
            }
            Layer::Dropout(l) => {
                let (y, c) = l.forward(x, rng);
                (y, LayerCache::Dropout(c))
            }
            Layer::Flatten => (x.clone(), LayerCache::Flatten),
        })
    }

    /// `(dx, parameter gradients in the order of [`Layer::params`])`.
    pub fn backward(&self, cache: &LayerCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        match (self, cache) {
            (Layer::Dense(l), LayerCache::Dense(c)) => l.backward(c, dy),
            (Layer::Conv1d(l), LayerCache::Conv1d(c)) => l.backward(c, dy),
            (Layer::Recurrent(l), LayerCache::Recurrent(c)) => l.backward(c, dy),
            (Layer::Bidirectional(l), LayerCache::Bidirectional(c)) => l.backprop(c, dy),
            (Layer::Dropout(l), LayerCache::Dropout(c)) => (l.backward(c, dy), Vec::new()),
            (Layer::Flatten, LayerCache::Flatten) => (dy.clone(), Vec::new()),
            _ => unreachable!("cache does not belong to this layer"),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            Layer::Dense(l) => vec![("weights", &l.weights), ("bias", &l.bias)],
            Layer::Conv1d(l) => vec![("weights", &l.weights), ("bias", &l.bias)],
            Layer::Recurrent(l) => vec![("w", &l.w), ("u", &l.u), ("b", &l.b)],
            Layer::Bidirectional(l) => vec![
                ("fwd_w", &l.forward.w),
                ("fwd_u", &l.forward.u),
                ("fwd_b", &l.forward.b),
                ("bwd_w", &l.backward.w),
                ("bwd_u", &l.backward.u),
                ("bwd_b", &l.backward.b),
            ],
            Layer::Dropout(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Recurrent(l) => vec![&mut l.w, &mut l.u, &mut l.b],
            Layer::Bidirectional(l) => vec![
                &mut l.forward.w,
                &mut l.forward.u,
                &mut l.forward.b,
                &mut l.backward.w,
                &mut l.backward.u,
                &mut l.backward.b,
            ],
            Layer::Dropout(_) | Layer::Flatten => Vec::new(),
        }
    }
}

/// Data flowing between layers: a sequence of steps or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    fn width(self) -> usize {
        match self {
            Shape::Seq { len, channels } => len * channels,
            Shape::Flat(w) => w,
        }
    }
}

fn glorot(m: &mut Matrix, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    for v in m.as_mut_slice() {
        *v = dist.sample(rng);
    }
}

fn init_recurrent(r: &mut Recurrent, rng: &mut ChaCha8Rng) {
    let gh = r.w.cols();
    glorot(&mut r.w, r.input, gh, rng);
    glorot(&mut r.u, r.hidden, gh, rng);
    if r.cell == CellKind::Lstm {
        // forget-gate bias starts at one
        for v in &mut r.b.as_mut_slice()[r.hidden..2 * r.hidden] {
            *v = 1.0;
        }
    }
}

/// A feed-forward stack over encoded names ending in a one-unit sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Forward-pass record needed by [`Model::backward`].
pub struct ForwardPass {
    caches: Vec<LayerCache>,
    /// Output probabilities.
    pub probs: Vec<f64>,
}

impl Model {
    /// Builds the layer stack from `specs` with Glorot-uniform weights drawn
    /// from a generator seeded with `seed`. Biases start at zero.
    pub fn from_specs(kind: ModelKind, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = Shape::Seq {
            len: MAX_LEN,
            channels: VOCAB_SIZE,
        };
        let mut layers = Vec::with_capacity(specs.len());
        for spec in &specs {
            spec.validate()?;
            let layer = match (spec.kind, shape) {
                (LayerKind::Dense, Shape::Flat(w)) => {
                    let mut d = Dense::zeros(w, spec.units, spec.activation);
                    glorot(&mut d.weights, w, spec.units, &mut rng);
                    shape = Shape::Flat(spec.units);
                    Layer::Dense(d)
                }
                (LayerKind::Conv1d, Shape::Seq { len, channels }) => {
                    let mut c = Conv1d::zeros(len, channels, spec.units, spec.kernel, spec.activation)?;
                    glorot(
                        &mut c.weights,
                        spec.kernel * channels,
                        spec.kernel * spec.units,
                        &mut rng,
                    );
                    shape = Shape::Seq {
                        len: c.out_len(),
                        channels: spec.units,
                    };
                    Layer::Conv1d(c)
                }
                (LayerKind::RnnCell | LayerKind::GruCell | LayerKind::LstmCell, Shape::Seq { len, channels }) => {
                    let cell = match spec.kind {
                        LayerKind::RnnCell => CellKind::Simple,
                        LayerKind::GruCell => CellKind::Gru,
                        _ => CellKind::Lstm,
                    };
                    let mut r = Recurrent::zeros(cell, len, channels, spec.units, false);
                    init_recurrent(&mut r, &mut rng);
                    shape = Shape::Flat(spec.units);
                    Layer::Recurrent(r)
                }
                (LayerKind::Bidirectional(cell), Shape::Seq { len, channels }) => {
                    let mut b = Bidirectional::zeros(cell, len, channels, spec.units);
                    init_recurrent(&mut b.forward, &mut rng);
                    init_recurrent(&mut b.backward, &mut rng);
                    shape = Shape::Flat(b.output_width());
                    Layer::Bidirectional(b)
                }
                (LayerKind::Dropout, _) => Layer::Dropout(Dropout { rate: spec.dropout }),
                (LayerKind::Flatten, s) => {
                    shape = Shape::Flat(s.width());
                    Layer::Flatten
                }
                (kind, s) => {
                    return Err(Error::ShapeMismatch(format!(
                        "{kind:?} layer cannot follow a {s:?} output"
                    )))
                }
            };
            layers.push(layer);
        }
        match layers.last() {
            Some(Layer::Dense(d)) if d.units() == 1 && d.activation == Activation::Sigmoid => {}
            _ => {
                return Err(Error::ShapeMismatch(
                    "model must end in a one-unit sigmoid dense layer".into(),
                ))
            }
        }
        Ok(Model {
            kind,
            specs,
            layers,
            seed,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(_, m)| m.len())
            .sum()
    }

    /// Named parameter tensors in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, m) in layer.params() {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// L2 factor applied to each parameter (0 for biases and for layers
    /// without a penalty), aligned with [`Model::params_mut`].
    pub fn l2_factors(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (layer, spec) in self.layers.iter().zip(&self.specs) {
            for (name, _) in layer.params() {
                let is_weight = !(name.ends_with('b') || name.ends_with("bias"));
                out.push(if is_weight { spec.l2 } else { 0.0 });
            }
        }
        out
    }

    /// `sum(l2 * w^2)` over penalized weights.
    pub fn l2_penalty(&self) -> f64 {
        self.named_params()
            .iter()
            .zip(self.l2_factors())
            .map(|((_, m), f)| f * m.sum_squares())
            .sum()
    }

    /// Sets the output layer's weights and bias to zero, so every
    /// prediction is exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        if let Some(Layer::Dense(d)) = self.layers.last_mut() {
            d.weights.fill(0.0);
            d.bias.fill(0.0);
        }
    }

    /// Output head width feeding the final dense layer.
    pub fn head_inputs(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.inputs(),
            _ => 0,
        }
    }

    /// Forward pass over a `[batch x 560]` input. Dropout is active only
    /// when `rng` is given.
    pub fn forward(&self, x: &Matrix, mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardPass> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, c) = layer.forward(&h, rng.as_deref_mut())?;
            caches.push(c);
            h = y;
        }
        Ok(ForwardPass {
            caches,
            probs: h.into_vec(),
        })
    }

    /// Gradients of the mean BCE with respect to every parameter, given the
    /// pass that produced `labels`' predictions. Penalty terms are not
    /// included.
    pub fn backward(&self, pass: &ForwardPass, labels: &[f64]) -> Vec<Matrix> {
        let n = labels.len() as f64;
        let dpre = Matrix::from_vec(
            labels.len(),
            1,
            pass.probs.iter().zip(labels).map(|(p, y)| (p - y) / n).collect(),
        )
        .expect("one output per label");
        let mut grads_rev: Vec<Vec<Matrix>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        let (mut dy, head_grads) = match (&self.layers[last], &pass.caches[last]) {
            (Layer::Dense(d), LayerCache::Dense(c)) => d.backward_pre(c, &dpre),
            _ => unreachable!("validated at construction"),
        };
        grads_rev.push(head_grads);
        for i in (0..last).rev() {
            let (dx, g) = self.layers[i].backward(&pass.caches[i], &dy);
            grads_rev.push(g);
            dy = dx;
        }
        grads_rev.into_iter().rev().flatten().collect()
    }

    /// Deterministic probabilities of label 1 (dropout off).
    pub fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(names.len());
        for chunk in names.chunks(CHUNK) {
            let x = encode_batch(chunk);
            let pass = self.forward(&x, None).expect("model input shape is fixed");
            out.extend(pass.probs);
        }
        out
    }

    pub fn predict_proba(&self, name: &EncodedName) -> f64 {
        self.predict_proba_batch(std::slice::from_ref(name))[0]
    }

    /// Logit of the output unit for one name, dropout off.
    pub fn logit(&self, name: &EncodedName) -> f64 {
        let p = self.predict_proba(name);
        (p / (1.0 - p)).ln()
    }
}

/// Stacks encoded names into a `[batch x 560]` matrix.
pub fn encode_batch(names: &[EncodedName]) -> Matrix {
    let mut x = Matrix::zeros(names.len(), FLAT_LEN);
    for (i, n) in names.iter().enumerate() {
        n.write_dense(x.row_mut(i));
    }
    x
}

/// Builds one of the five architectures with seeded initialization.
pub fn build_model(kind: ModelKind, seed: u64) -> Result<Model> {
    Model::from_specs(kind, kind.architecture(), seed)
}

/// Probability from the output layer's pre-activation, shared with tests.
pub fn output_probability(logit: f64) -> f64 {
    sigmoid(logit)
}
