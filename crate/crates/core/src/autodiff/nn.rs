//! The detector network: a two-layer GCN encoder `g` followed by a two-layer
//! MLP head `h`. The head emits two logits; the novelty score is the softmax
//! probability of index 1.
//!
//! Layer order:
//! `GCNConv → BN → ReLU → Dropout → GCNConv → BN → ReLU` (encoder),
//! `Linear → BN → ReLU → Dropout → Linear(·, 2)` (head).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{BatchStats, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, AttributedGraph, NormalizedAdjacency};
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Widths and switches of the detector network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub gcn_hidden_dim: usize,
    pub gcn_output_dim: usize,
    pub mlp_hidden_dim: usize,
    pub dropout: f64,
    pub batch_norm: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            gcn_hidden_dim: 16,
            gcn_output_dim: 16,
            mlp_hidden_dim: 8,
            dropout: 0.5,
            batch_norm: true,
        }
    }
}

/// Scale and shift of one batch-norm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams<T> {
    pub gamma: Matrix<T>,
    pub beta: Matrix<T>,
}

impl<T: Scalar> BatchNormParams<T> {
    fn identity(width: usize) -> Self {
        Self {
            gamma: Matrix::filled(1, width, T::one()),
            beta: Matrix::zeros(1, width),
        }
    }
}

/// Trainable tensors of the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams<T> {
    pub gcn1_weight: Matrix<T>,
    pub bn1: Option<BatchNormParams<T>>,
    pub gcn2_weight: Matrix<T>,
    pub bn2: Option<BatchNormParams<T>>,
    pub mlp1_weight: Matrix<T>,
    pub mlp1_bias: Matrix<T>,
    pub bn3: Option<BatchNormParams<T>>,
    pub mlp2_weight: Matrix<T>,
    pub mlp2_bias: Matrix<T>,
}

fn uniform_fan_in<T: Scalar>(rows: usize, cols: usize, fan_in: usize, rng: &mut SeededRng) -> Matrix<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

impl<T: Scalar> ClassifierParams<T> {
    /// Uniform `±1/√fan_in` weights and biases; batch-norm starts at identity.
    pub fn init(config: &ClassifierConfig, rng: &mut SeededRng) -> Self {
        let c = config;
        let bn = |w: usize| c.batch_norm.then(|| BatchNormParams::identity(w));
        Self {
            gcn1_weight: uniform_fan_in(c.input_dim, c.gcn_hidden_dim, c.input_dim, rng),
            bn1: bn(c.gcn_hidden_dim),
            gcn2_weight: uniform_fan_in(c.gcn_hidden_dim, c.gcn_output_dim, c.gcn_hidden_dim, rng),
            bn2: bn(c.gcn_output_dim),
            mlp1_weight: uniform_fan_in(c.gcn_output_dim, c.mlp_hidden_dim, c.gcn_output_dim, rng),
            mlp1_bias: uniform_fan_in(1, c.mlp_hidden_dim, c.gcn_output_dim, rng),
            bn3: bn(c.mlp_hidden_dim),
            mlp2_weight: uniform_fan_in(c.mlp_hidden_dim, 2, c.mlp_hidden_dim, rng),
            mlp2_bias: uniform_fan_in(1, 2, c.mlp_hidden_dim, rng),
        }
    }

    /// All-zero weights and biases (batch-norm scale stays at one).
    pub fn zeros(config: &ClassifierConfig) -> Self {
        let c = config;
        let bn = |w: usize| c.batch_norm.then(|| BatchNormParams::identity(w));
        Self {
            gcn1_weight: Matrix::zeros(c.input_dim, c.gcn_hidden_dim),
            bn1: bn(c.gcn_hidden_dim),
            gcn2_weight: Matrix::zeros(c.gcn_hidden_dim, c.gcn_output_dim),
            bn2: bn(c.gcn_output_dim),
            mlp1_weight: Matrix::zeros(c.gcn_output_dim, c.mlp_hidden_dim),
            mlp1_bias: Matrix::zeros(1, c.mlp_hidden_dim),
            bn3: bn(c.mlp_hidden_dim),
            mlp2_weight: Matrix::zeros(c.mlp_hidden_dim, 2),
            mlp2_bias: Matrix::zeros(1, 2),
        }
    }

    /// `(name, tensor)` pairs in a fixed order shared by optimizers and checkpoints.
    pub fn named(&self) -> Vec<(&'static str, &Matrix<T>)> {
        let mut out = vec![("gcn1.weight", &self.gcn1_weight)];
        if let Some(bn) = &self.bn1 {
            out.extend([("bn1.gamma", &bn.gamma), ("bn1.beta", &bn.beta)]);
        }
        out.push(("gcn2.weight", &self.gcn2_weight));
        if let Some(bn) = &self.bn2 {
            out.extend([("bn2.gamma", &bn.gamma), ("bn2.beta", &bn.beta)]);
        }
        out.extend([("mlp1.weight", &self.mlp1_weight), ("mlp1.bias", &self.mlp1_bias)]);
        if let Some(bn) = &self.bn3 {
            out.extend([("bn3.gamma", &bn.gamma), ("bn3.beta", &bn.beta)]);
        }
        out.extend([("mlp2.weight", &self.mlp2_weight), ("mlp2.bias", &self.mlp2_bias)]);
        out
    }

    /// Mutable tensors in the order of [`Self::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.gcn1_weight];
        if let Some(bn) = &mut self.bn1 {
            out.extend([&mut bn.gamma, &mut bn.beta]);
        }
        out.push(&mut self.gcn2_weight);
        if let Some(bn) = &mut self.bn2 {
            out.extend([&mut bn.gamma, &mut bn.beta]);
        }
        out.extend([&mut self.mlp1_weight, &mut self.mlp1_bias]);
        if let Some(bn) = &mut self.bn3 {
            out.extend([&mut bn.gamma, &mut bn.beta]);
        }
        out.extend([&mut self.mlp2_weight, &mut self.mlp2_bias]);
        out
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        if self.gcn1_weight.rows() != input_dim {
            return Err(Error::Shape {
                op: "classifier_forward",
                detail: format!(
                    "features have {input_dim} columns, first layer expects {}",
                    self.gcn1_weight.rows()
                ),
            });
        }
        Ok(())
    }
}

/// Node features plus the propagation operator, shared by every forward pass.
#[derive(Clone, Debug)]
pub struct GraphInput<T> {
    pub features: Matrix<T>,
    pub adjacency: NormalizedAdjacency<T>,
}

impl<T: Scalar> GraphInput<T> {
    pub fn new(graph: &AttributedGraph<T>) -> Self {
        Self {
            features: graph.features().clone(),
            adjacency: normalized_adjacency(graph),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Training mode draws dropout masks and normalizes with batch statistics.
pub enum Mode<'r> {
    Train(&'r mut SeededRng),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Recorded outputs of one forward pass.
pub struct ForwardPass<T> {
    /// Parameter leaves, in the order of the model's tensor list.
    pub params: Vec<Var>,
    /// Encoder output `g`, when the model has one.
    pub embedding: Option<Var>,
    /// Novelty scores, `n x 1`.
    pub scores: Var,
    /// Batch statistics computed in training mode.
    pub batch_stats: Vec<BatchStats<T>>,
}

/// Anything that maps a graph to per-node novelty scores on a tape.
pub trait ScoreModel<T: Scalar> {
    fn forward<'a>(&self, tape: &Tape<'a, T>, input: &'a GraphInput<T>, mode: Mode<'_>) -> Result<ForwardPass<T>>;

    fn tensors(&self) -> Vec<&Matrix<T>>;

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;

    /// Keeps the statistics of the latest training pass for evaluation.
    fn record_batch_stats(&mut self, _stats: Vec<BatchStats<T>>) {}

    /// Eval-mode scores as plain values.
    fn scores(&self, input: &GraphInput<T>) -> Result<Vec<T>> {
        let tape = Tape::new();
        let pass = self.forward(&tape, input, Mode::Eval)?;
        let scores = tape.value(pass.scores).as_slice().to_vec();
        Ok(scores)
    }
}

/// Detector network with its evaluation-time batch statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier<T> {
    pub config: ClassifierConfig,
    pub params: ClassifierParams<T>,
    /// Statistics from the last training pass, one entry per batch-norm layer.
    pub stats: Vec<BatchStats<T>>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(config: ClassifierConfig, rng: &mut SeededRng) -> Self {
        let params = ClassifierParams::init(&config, rng);
        Self::from_params(config, params)
    }

    pub fn from_params(config: ClassifierConfig, params: ClassifierParams<T>) -> Self {
        Self {
            config,
            params,
            stats: Vec::new(),
        }
    }

    /// Forward pass over caller-created parameter leaves, which must follow
    /// the order of [`ClassifierParams::named`].
    pub fn forward_from<'a>(
        &self,
        tape: &Tape<'a, T>,
        input: &'a GraphInput<T>,
        leaves: &[Var],
        mut mode: Mode<'_>,
    ) -> Result<ForwardPass<T>> {
        let p = &self.params;
        p.check(input.features.cols())?;
        if leaves.len() != p.named().len() {
            return Err(Error::Shape {
                op: "classifier_forward",
                detail: format!("{} leaves for {} tensors", leaves.len(), p.named().len()),
            });
        }
        let adj = input.adjacency.as_csr();
        let mut it = leaves.iter().copied();
        let mut next = || it.next().expect("leaf per tensor");
        let w1 = next();
        let bn1 = p.bn1.as_ref().map(|_| (next(), next()));
        let w2 = next();
        let bn2 = p.bn2.as_ref().map(|_| (next(), next()));
        let (m1, b1) = (next(), next());
        let bn3 = p.bn3.as_ref().map(|_| (next(), next()));
        let (m2, b2) = (next(), next());

        let mut stats = Vec::new();
        let x = tape.constant(input.features.clone());

        let h = tape.matmul(x, w1)?;
        let h = tape.sparse_matmul(adj, h)?;
        let h = self.norm_layer(tape, h, bn1, 0, &mode, &mut stats)?;
        let h = tape.relu(h);
        let h = self.dropout_layer(tape, h, &mut mode)?;
        let h = tape.matmul(h, w2)?;
        let h = tape.sparse_matmul(adj, h)?;
        let h = self.norm_layer(tape, h, bn2, 1, &mode, &mut stats)?;
        let embedding = tape.relu(h);

        let z = tape.matmul(embedding, m1)?;
        let z = tape.add_bias(z, b1)?;
        let z = self.norm_layer(tape, z, bn3, 2, &mode, &mut stats)?;
        let z = tape.relu(z);
        let z = self.dropout_layer(tape, z, &mut mode)?;
        let z = tape.matmul(z, m2)?;
        let logits = tape.add_bias(z, b2)?;
        let probs = tape.row_softmax(logits);
        let scores = tape.select_column(probs, 1)?;

        Ok(ForwardPass {
            params: leaves.to_vec(),
            embedding: Some(embedding),
            scores,
            batch_stats: stats,
        })
    }

    pub(crate) fn dropout_layer(&self, tape: &Tape<'_, T>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let p = self.config.dropout;
        match mode {
            Mode::Train(rng) if p > 0.0 => {
                let (r, c) = tape.shape(x);
                let keep: Vec<bool> = (0..r * c).map(|_| rng.random_bool(1.0 - p)).collect();
                tape.dropout(x, T::of(p), &keep)
            }
            _ => Ok(x),
        }
    }

    fn norm_layer(
        &self,
        tape: &Tape<'_, T>,
        x: Var,
        bn: Option<(Var, Var)>,
        layer: usize,
        mode: &Mode<'_>,
        collected: &mut Vec<BatchStats<T>>,
    ) -> Result<Var> {
        let Some((gamma, beta)) = bn else { return Ok(x) };
        let width = tape.shape(x).1;
        let identity;
        let stats = if mode.is_train() {
            None
        } else {
            Some(match self.stats.get(layer) {
                Some(s) => s,
                None => {
                    identity = BatchStats {
                        mean: vec![T::zero(); width],
                        var: vec![T::one(); width],
                    };
                    &identity
                }
            })
        };
        let (y, used) = tape.batch_norm(x, gamma, beta, T::of(BATCH_NORM_EPS), stats)?;
        if mode.is_train() {
            collected.push(used);
        }
        Ok(y)
    }
}

impl<T: Scalar> ScoreModel<T> for Classifier<T> {
    fn forward<'a>(&self, tape: &Tape<'a, T>, input: &'a GraphInput<T>, mode: Mode<'_>) -> Result<ForwardPass<T>> {
        let leaves: Vec<Var> = self.params.named().into_iter().map(|(_, m)| tape.param(m.clone())).collect();
        self.forward_from(tape, input, &leaves, mode)
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.params.named().into_iter().map(|(_, m)| m).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.params.tensors_mut()
    }

    fn record_batch_stats(&mut self, stats: Vec<BatchStats<T>>) {
        if !stats.is_empty() {
            self.stats = stats;
        }
    }
}

/// Score model with a single bias: every node scores `σ(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantModel<T> {
    pub bias: Matrix<T>,
}

impl<T: Scalar> ConstantModel<T> {
    pub fn new(bias: T) -> Self {
        Self {
            bias: Matrix::scalar(bias),
        }
    }

    pub fn score(&self) -> T {
        super::tape::sigmoid(self.bias.item())
    }
}

impl<T: Scalar> ScoreModel<T> for ConstantModel<T> {
    fn forward<'a>(&self, tape: &Tape<'a, T>, input: &'a GraphInput<T>, _mode: Mode<'_>) -> Result<ForwardPass<T>> {
        let b = tape.param(self.bias.clone());
        let s = tape.sigmoid(b);
        let scores = tape.broadcast_rows(s, input.num_nodes())?;
        Ok(ForwardPass {
            params: vec![b],
            embedding: None,
            scores,
            batch_stats: Vec::new(),
        })
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.bias]
    }
}
