//! Reference detectors: a plain domain discriminator, the uPU and nnPU risk
//! estimators with a warm-up prior estimate, distance-seeded label
//! propagation (LP-PUL), and an Oracle trained on the true novelty labels.
//!
//! The trained baselines share one loop: full-batch Adam on a training
//! objective, evaluation of the same objective on validation nodes after
//! every epoch, and early stopping that restores the best epoch.

use std::cell::Cell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Classifier, ClassifierConfig, GraphInput, Mode, ScoreModel, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::{LossAudit, Split, SplitAssignment};
use crate::graph::{multi_source_bfs, normalized_adjacency, AttributedGraph, Domain};
use crate::matrix::Matrix;
use crate::objectives::{self, bbe_prior, tape as obj, PriorEstimate, PuTerms};
use crate::rng::{derive_seed, seeded, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    DomainDisc,
    Upu,
    Nnpu,
    LpPul,
    Oracle,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 5] = [
        BaselineMethod::DomainDisc,
        BaselineMethod::Upu,
        BaselineMethod::Nnpu,
        BaselineMethod::LpPul,
        BaselineMethod::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::DomainDisc => "domain-disc",
            BaselineMethod::Upu => "upu",
            BaselineMethod::Nnpu => "nnpu",
            BaselineMethod::LpPul => "lp-pul",
            BaselineMethod::Oracle => "oracle",
        }
    }

    /// Epoch budget when none is configured.
    pub fn default_epochs(self) -> usize {
        match self {
            BaselineMethod::Upu | BaselineMethod::Nnpu => 1000,
            BaselineMethod::LpPul => 0,
            BaselineMethod::DomainDisc | BaselineMethod::Oracle => 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpPulConfig {
    /// Share of target nodes, farthest from the source first, seeded novel.
    pub init_novel_ratio: f64,
    pub layers: usize,
    /// Weight of propagated mass against the seed.
    pub alpha: f64,
}

impl Default for LpPulConfig {
    fn default() -> Self {
        Self {
            init_novel_ratio: 0.5,
            layers: 3,
            alpha: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Overrides the method's default epoch budget.
    pub max_epochs: Option<usize>,
    /// Domain-discrimination epochs before the prior is estimated (uPU/nnPU).
    pub mpe_warmup_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    /// Minimum positive mass per bin for the prior estimator.
    pub bbe_delta: f64,
    pub lp_pul: LpPulConfig,
    pub seed: u64,
    pub model: ClassifierConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_epochs: None,
            mpe_warmup_epochs: 150,
            patience: 50,
            lr: 0.001,
            bbe_delta: 0.1,
            lp_pul: LpPulConfig::default(),
            seed: 0,
            model: ClassifierConfig::default(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be positive".into()));
        }
        if self.max_epochs == Some(0) {
            return Err(Error::InvalidArgument("max_epochs must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        let lp = &self.lp_pul;
        if !(lp.alpha > 0.0 && lp.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("label propagation alpha {} outside (0, 1)", lp.alpha)));
        }
        if !(0.0..=1.0).contains(&lp.init_novel_ratio) || lp.layers == 0 {
            return Err(Error::InvalidArgument("invalid LP-PUL seeding ratio or layer count".into()));
        }
        Ok(())
    }

    fn epochs(&self, method: BaselineMethod) -> usize {
        self.max_epochs.unwrap_or_else(|| method.default_epochs())
    }
}

/// Per-epoch diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// uPU bracket on training nodes, for the PU risks.
    pub bracket: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub method: BaselineMethod,
    /// Novelty score for every node.
    pub scores: Vec<f64>,
    /// Restored network, absent for LP-PUL.
    pub model: Option<Classifier<f64>>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub prior: Option<PriorEstimate>,
    pub trace: Vec<EpochRecord>,
    pub audit: LossAudit,
}

pub fn train_baseline(
    method: BaselineMethod,
    graph: &AttributedGraph<f64>,
    splits: &SplitAssignment,
    config: &BaselineConfig,
) -> Result<BaselineOutput> {
    match method {
        BaselineMethod::DomainDisc => train_domain_discriminator(graph, splits, config),
        BaselineMethod::Upu => train_pu(graph, splits, config, false),
        BaselineMethod::Nnpu => train_pu(graph, splits, config, true),
        BaselineMethod::LpPul => lp_pul(graph, splits, config),
        BaselineMethod::Oracle => train_oracle(graph, splits, config),
    }
}

struct Sets {
    src_train: Rc<[usize]>,
    tgt_train: Rc<[usize]>,
    src_val: Vec<usize>,
    tgt_val: Vec<usize>,
}

impl Sets {
    fn new(graph: &AttributedGraph<f64>, splits: &SplitAssignment) -> Result<Self> {
        if splits.len() != graph.num_nodes() {
            return Err(Error::InvalidArgument("split assignment does not match the graph".into()));
        }
        let get = |s: Split| {
            let v = splits.nodes(s);
            if v.is_empty() {
                Err(Error::EmptySet(format!("{} split is empty", s.name())))
            } else {
                Ok(v)
            }
        };
        Ok(Self {
            src_train: get(Split::SrcTrain)?.into(),
            tgt_train: get(Split::TgtTrain)?.into(),
            src_val: get(Split::SrcVal)?,
            tgt_val: get(Split::TgtVal)?,
        })
    }

    fn audit(&self, n: usize) -> LossAudit {
        let mut a = LossAudit::new(n);
        a.record(&self.src_train);
        a.record(&self.tgt_train);
        a.record(&self.src_val);
        a.record(&self.tgt_val);
        a
    }

    fn val_nodes(&self) -> Vec<usize> {
        let mut v = self.src_val.clone();
        v.extend(&self.tgt_val);
        v
    }
}

/// Network, optimizer and dropout stream of one training run.
struct Trainer<'a> {
    input: &'a GraphInput<f64>,
    model: Classifier<f64>,
    adam: AdamState<f64>,
    rng: SeededRng,
}

impl<'a> Trainer<'a> {
    fn new(graph: &AttributedGraph<f64>, input: &'a GraphInput<f64>, config: &BaselineConfig, seed: u64) -> Self {
        let mut model_config = config.model.clone();
        model_config.input_dim = graph.feature_dim();
        Self {
            input,
            model: Classifier::new(model_config, &mut seeded(derive_seed(seed, 0))),
            adam: AdamState::new(config.lr),
            rng: seeded(derive_seed(seed, 1)),
        }
    }

    /// One full-batch step on `loss`; returns the training loss.
    fn epoch(&mut self, loss: impl Fn(&Tape<'_, f64>, Var) -> Result<Var>) -> Result<f64> {
        let tape = Tape::new();
        let pass = self.model.forward(&tape, self.input, Mode::Train(&mut self.rng))?;
        let l = loss(&tape, pass.scores)?;
        let value = tape.item(l);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss at Adam step {}", self.adam.step)));
        }
        let grads = tape.backward(l)?;
        let grads: Vec<Matrix<f64>> = pass
            .params
            .iter()
            .zip(self.model.tensors())
            .map(|(&v, like)| grads.get_or_zeros(v, like))
            .collect();
        drop(tape);
        self.adam.step(&mut self.model.tensors_mut(), &grads);
        self.model.record_batch_stats(pass.batch_stats);
        Ok(value)
    }

    fn scores(&self) -> Result<Vec<f64>> {
        self.model.scores(self.input)
    }
}

/// Keeps the best model seen so far by validation loss.
struct EarlyStop {
    patience: usize,
    best: f64,
    best_epoch: usize,
    best_model: Option<Classifier<f64>>,
    since: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            best_model: None,
            since: 0,
        }
    }

    /// Returns true when training should stop.
    fn observe(&mut self, epoch: usize, val: f64, model: &Classifier<f64>) -> Result<bool> {
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.best_model = Some(model.clone());
            self.since = 0;
        } else {
            self.since += 1;
        }
        Ok(self.since >= self.patience)
    }
}

fn finish(
    method: BaselineMethod,
    trainer: Trainer<'_>,
    stop: EarlyStop,
    trace: Vec<EpochRecord>,
    prior: Option<PriorEstimate>,
    audit: LossAudit,
) -> Result<BaselineOutput> {
    let model = stop.best_model.unwrap_or(trainer.model);
    let scores = model.scores(trainer.input)?;
    Ok(BaselineOutput {
        method,
        scores,
        model: Some(model),
        epochs_run: trace.len(),
        best_epoch: stop.best_epoch,
        prior,
        trace,
        audit,
    })
}

/// Classifier trained to tell target nodes (label novel) from source nodes.
pub fn train_domain_discriminator(
    graph: &AttributedGraph<f64>,
    splits: &SplitAssignment,
    config: &BaselineConfig,
) -> Result<BaselineOutput> {
    config.validate()?;
    let method = BaselineMethod::DomainDisc;
    let sets = Sets::new(graph, splits)?;
    let domains = graph.domains()?;
    let input = GraphInput::new(graph);
    let mut trainer = Trainer::new(graph, &input, config, derive_seed(config.seed, 1));
    let mut stop = EarlyStop::new(config.patience);
    let mut trace = Vec::new();
    let val = sets.val_nodes();
    for epoch in 0..config.epochs(method) {
        let train_loss = trainer.epoch(|t, s| obj::domain_bce_loss(t, s, &sets.src_train, &sets.tgt_train))?;
        let val_loss = objectives::domain_bce_loss(&trainer.scores()?, domains, &val)?;
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            bracket: None,
        });
        if stop.observe(epoch, val_loss, &trainer.model)? {
            break;
        }
    }
    finish(method, trainer, stop, trace, None, sets.audit(graph.num_nodes()))
}

/// Classifier trained with BCE on the true novelty labels of training nodes.
pub fn train_oracle(
    graph: &AttributedGraph<f64>,
    splits: &SplitAssignment,
    config: &BaselineConfig,
) -> Result<BaselineOutput> {
    config.validate()?;
    let method = BaselineMethod::Oracle;
    let novel = graph
        .novel_mask()
        .ok_or_else(|| Error::InvalidArgument("the Oracle needs novel labels".into()))?;
    let sets = Sets::new(graph, splits)?;
    let (pos, neg): (Vec<usize>, Vec<usize>) = sets
        .src_train
        .iter()
        .chain(sets.tgt_train.iter())
        .partition(|&&v| novel[v]);
    let (pos, neg): (Rc<[usize]>, Rc<[usize]>) = (pos.into(), neg.into());
    let input = GraphInput::new(graph);
    let mut trainer = Trainer::new(graph, &input, config, derive_seed(config.seed, 5));
    let mut stop = EarlyStop::new(config.patience);
    let mut trace = Vec::new();
    let val = sets.val_nodes();
    for epoch in 0..config.epochs(method) {
        let train_loss = trainer.epoch(|t, s| obj::labelled_bce_loss(t, s, &neg, &pos))?;
        let val_loss = objectives::labelled_bce_loss(&trainer.scores()?, novel, &val)?;
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            bracket: None,
        });
        if stop.observe(epoch, val_loss, &trainer.model)? {
            break;
        }
    }
    finish(method, trainer, stop, trace, None, sets.audit(graph.num_nodes()))
}

/// Warm-up with domain BCE, estimate the prior from validation scores, then
/// continue with the uPU (or nnPU) risk under early stopping.
fn train_pu(
    graph: &AttributedGraph<f64>,
    splits: &SplitAssignment,
    config: &BaselineConfig,
    non_negative: bool,
) -> Result<BaselineOutput> {
    config.validate()?;
    let method = if non_negative {
        BaselineMethod::Nnpu
    } else {
        BaselineMethod::Upu
    };
    let sets = Sets::new(graph, splits)?;
    let domains = graph.domains()?;
    let input = GraphInput::new(graph);
    // both variants share a seed so their runs coincide until the clamp acts
    let mut trainer = Trainer::new(graph, &input, config, derive_seed(config.seed, 3));
    let total = config.epochs(method);
    let warmup = config.mpe_warmup_epochs.min(total);
    let mut trace = Vec::new();
    let val = sets.val_nodes();
    for epoch in 0..warmup {
        let train_loss = trainer.epoch(|t, s| obj::domain_bce_loss(t, s, &sets.src_train, &sets.tgt_train))?;
        let val_loss = objectives::domain_bce_loss(&trainer.scores()?, domains, &val)?;
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            bracket: None,
        });
    }
    let scores = trainer.scores()?;
    let pick = |nodes: &[usize]| nodes.iter().map(|&v| scores[v]).collect::<Vec<f64>>();
    let prior = bbe_prior(&pick(&sets.src_val), &pick(&sets.tgt_val), config.bbe_delta)?;
    if prior.warning {
        log::warn!("prior estimate fell back to 1: no score bin held enough positives");
    }
    let pi = prior.pi_nonnovel;

    let mut stop = EarlyStop::new(config.patience);
    for epoch in warmup..total {
        let bracket = Cell::new(0.0);
        let train_loss = trainer.epoch(|t, s| {
            let (pos, br) = obj::pu_parts(t, s, &sets.src_train, &sets.tgt_train, pi)?;
            bracket.set(t.item(br));
            if non_negative && t.item(br) < 0.0 {
                Ok(pos)
            } else {
                t.add(pos, br)
            }
        })?;
        let terms = PuTerms::new(&trainer.scores()?, &sets.src_val, &sets.tgt_val)?;
        let val_loss = if non_negative { terms.nnpu(pi) } else { terms.upu(pi) };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            bracket: Some(bracket.get()),
        });
        if stop.observe(epoch, val_loss, &trainer.model)? {
            break;
        }
    }
    finish(method, trainer, stop, trace, Some(prior), sets.audit(graph.num_nodes()))
}

pub fn train_upu(graph: &AttributedGraph<f64>, splits: &SplitAssignment, config: &BaselineConfig) -> Result<BaselineOutput> {
    train_pu(graph, splits, config, false)
}

pub fn train_nnpu(graph: &AttributedGraph<f64>, splits: &SplitAssignment, config: &BaselineConfig) -> Result<BaselineOutput> {
    train_pu(graph, splits, config, true)
}

/// Target nodes farthest from every source node are seeded novel, then the
/// seed is smoothed by `layers` rounds of `Z ← α·Â·Z + (1 − α)·Z⁰`.
///
/// Seeding ranks target nodes outside the test split by hop distance,
/// unreachable first, ties by ascending index, and seeds the first
/// `ceil(ratio · count)`.
pub fn lp_pul(graph: &AttributedGraph<f64>, splits: &SplitAssignment, config: &BaselineConfig) -> Result<BaselineOutput> {
    config.validate()?;
    if splits.len() != graph.num_nodes() {
        return Err(Error::InvalidArgument("split assignment does not match the graph".into()));
    }
    let sources = graph.nodes_in(Domain::Source)?;
    let eligible = splits.nodes_in(&[Split::TgtTrain, Split::TgtVal]);
    let seeds = lp_pul_seeds(graph, &sources, &eligible, config.lp_pul.init_novel_ratio)?;
    let n = graph.num_nodes();
    let mut z0 = vec![0.0; n];
    for &v in &seeds {
        z0[v] = 1.0;
    }
    let scores = propagate(graph, &z0, config.lp_pul.alpha, config.lp_pul.layers);
    let mut audit = LossAudit::new(n);
    audit.record(&sources);
    audit.record(&eligible);
    Ok(BaselineOutput {
        method: BaselineMethod::LpPul,
        scores,
        model: None,
        epochs_run: 0,
        best_epoch: 0,
        prior: None,
        trace: Vec::new(),
        audit,
    })
}

/// The seeded-novel nodes among `candidates`, farthest from `sources` first.
pub fn lp_pul_seeds(
    graph: &AttributedGraph<f64>,
    sources: &[usize],
    candidates: &[usize],
    ratio: f64,
) -> Result<Vec<usize>> {
    let dist = multi_source_bfs(graph, sources)?;
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then(a.cmp(&b)));
    let k = (ratio * ranked.len() as f64).ceil() as usize;
    ranked.truncate(k.min(ranked.len()));
    Ok(ranked)
}

/// `layers` rounds of `Z ← α·Â·Z + (1 − α)·Z⁰` from `Z = Z⁰`.
pub fn propagate(graph: &AttributedGraph<f64>, z0: &[f64], alpha: f64, layers: usize) -> Vec<f64> {
    let adj = normalized_adjacency(graph);
    let seed = Matrix::column(z0.to_vec());
    let mut z = seed.clone();
    for _ in 0..layers {
        let spread = adj.as_csr().matmul_dense(&z).expect("square operator");
        z = spread.zip_map(&seed, |a, b| alpha * a + (1.0 - alpha) * b);
    }
    z.as_slice().to_vec()
}
