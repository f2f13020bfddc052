//! Recall-constrained training with selective link prediction.
//!
//! For each recall floor `α̃` in a grid, a fresh detector minimizes the mean
//! source score `β̂` subject to the mean target score `α̂ >= α̃`, through the
//! Lagrangian
//!
//! ```text
//! L = β̂ + ξ·L_lp + λ·(α̃ − α̂)
//! ```
//!
//! with Adam descent on the network and projected ascent on `λ`. The
//! auxiliary link loss `L_lp` reconstructs edges among the target nodes
//! scored below the `α̃`-quantile threshold, pulling apart the embedding of
//! likely non-novel nodes from the rest. The final model is the candidate
//! with the highest validation recall among those whose validation FPR is
//! below `β̃`.

use std::io::Write;
use std::path::Path;
use std::rc::Rc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Classifier, ClassifierConfig, GraphInput, Mode, ScoreModel, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::{LossAudit, Split, SplitAssignment};
use crate::graph::{sample_complement_edges, AttributedGraph, ComplementSample, Domain, Edge};
use crate::matrix::Matrix;
use crate::objectives::tape::mean_score;
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::scalar::Scalar;

/// Which node pairs the link loss reconstructs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Target nodes scored below the threshold.
    #[default]
    Selective,
    /// All target nodes, regardless of score.
    TargetSubgraph,
    /// All nodes.
    FullComplement,
    /// No link loss.
    Off,
}

impl SamplingMode {
    pub const ALL: [SamplingMode; 4] = [
        SamplingMode::Selective,
        SamplingMode::TargetSubgraph,
        SamplingMode::FullComplement,
        SamplingMode::Off,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::Selective => "selective",
            SamplingMode::TargetSubgraph => "target-subgraph",
            SamplingMode::FullComplement => "full-complement",
            SamplingMode::Off => "off",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoSlipConfig {
    /// Weight `ξ` of the link loss.
    pub xi: f64,
    /// Recall floors, strictly ascending in (0, 1).
    pub alpha_grid: Vec<f64>,
    /// FPR ceiling `β̃` for the final selection.
    pub beta_max: f64,
    /// Primal-dual iterations per candidate.
    pub steps: usize,
    pub lambda_init: f64,
    pub lr_primal: f64,
    pub lr_dual: f64,
    pub sampling_mode: SamplingMode,
    pub seed: u64,
    pub model: ClassifierConfig,
}

impl Default for RecoSlipConfig {
    fn default() -> Self {
        Self {
            xi: 0.001,
            alpha_grid: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            beta_max: 0.01,
            steps: 1000,
            lambda_init: 0.1,
            lr_primal: 0.001,
            lr_dual: 0.001,
            sampling_mode: SamplingMode::Selective,
            seed: 0,
            model: ClassifierConfig::default(),
        }
    }
}

impl RecoSlipConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.alpha_grid.is_empty() {
            return bad("alpha grid is empty".into());
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} outside (0, 1)"));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("alpha grid must be strictly ascending".into());
        }
        if !(self.beta_max > 0.0 && self.beta_max < 1.0) {
            return bad(format!("beta_max {} outside (0, 1)", self.beta_max));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return bad(format!("xi {} must be a finite non-negative number", self.xi));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return bad(format!("lambda_init {} must be non-negative", self.lambda_init));
        }
        if !(self.lr_primal > 0.0 && self.lr_dual > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }
}

/// Smallest observed score `z` such that the share of scores `<= z` is
/// strictly greater than `1 - α̃`.
pub fn score_threshold<T: Scalar>(scores: &[T], alpha_tilde: f64) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::EmptySet("score_threshold needs at least one score".into()));
    }
    if !(alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha_tilde} outside (0, 1)")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score_threshold input contains NaN".into()));
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = s.len() as f64;
    let bound = 1.0 - alpha_tilde;
    let mut i = 0;
    while i < s.len() {
        // end of the run of values equal to s[i]
        let j = i + s[i..].partition_point(|&x| x == s[i]);
        if j as f64 / n > bound {
            return Ok(s[i]);
        }
        i = j;
    }
    Ok(s[s.len() - 1])
}

/// Node set whose internal pairs the link loss works on, plus the existing
/// edges among it. Non-edges among the descriptor nodes are drawn lazily.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSets {
    /// Ascending node indices.
    pub descriptor: Vec<usize>,
    pub e_plus: Vec<Edge>,
}

/// Builds the edge sets from `eligible` nodes (the training nodes). In
/// `Selective` mode only target nodes scoring strictly below `z` qualify.
pub fn build_edge_sets<T: Scalar>(
    graph: &AttributedGraph<T>,
    scores: &[T],
    z: T,
    mode: SamplingMode,
    eligible: &[usize],
) -> Result<EdgeSets> {
    let n = graph.num_nodes();
    if scores.len() != n {
        return Err(Error::InvalidArgument(format!("{} scores for {n} nodes", scores.len())));
    }
    let domains = graph.domains()?;
    let keep = |v: usize| match mode {
        SamplingMode::Selective => domains[v] == Domain::Target && scores[v] < z,
        SamplingMode::TargetSubgraph => domains[v] == Domain::Target,
        SamplingMode::FullComplement => true,
        SamplingMode::Off => false,
    };
    let mut member = vec![false; n];
    for &v in eligible {
        if v >= n {
            return Err(Error::InvalidArgument(format!("node {v} outside the graph")));
        }
        member[v] = keep(v);
    }
    let descriptor: Vec<usize> = (0..n).filter(|&v| member[v]).collect();
    let e_plus = graph
        .edges()
        .iter()
        .copied()
        .filter(|&(i, j)| member[i] && member[j])
        .collect();
    Ok(EdgeSets { descriptor, e_plus })
}

/// As many uniformly drawn non-edges among the descriptor as there are
/// positive edges.
pub fn sample_negatives<T: Scalar>(
    graph: &AttributedGraph<T>,
    sets: &EdgeSets,
    rng: &mut SeededRng,
) -> Result<ComplementSample> {
    if sets.e_plus.is_empty() {
        return Ok(ComplementSample::default());
    }
    sample_complement_edges(graph, &sets.descriptor, sets.e_plus.len(), rng)
}

/// Edge reconstruction loss on encoder outputs `g`:
/// `mean_{E+} −ln σ(g_i·g_j) + mean_{E−} −ln(1 − σ(g_i·g_j))`.
/// Zero when there are no positive pairs.
pub fn link_prediction_loss<T: Scalar>(
    tape: &Tape<'_, T>,
    embedding: Var,
    positives: &[Edge],
    negatives: &[Edge],
) -> Result<Var> {
    if positives.is_empty() {
        return Ok(tape.constant(Matrix::scalar(T::zero())));
    }
    let pos = tape.row_dot(embedding, Rc::from(positives))?;
    let pos = tape.softplus(tape.scale(pos, -T::one()));
    let mut loss = tape.mean(pos)?;
    if !negatives.is_empty() {
        let neg = tape.row_dot(embedding, Rc::from(negatives))?;
        let neg = tape.mean(tape.softplus(neg))?;
        loss = tape.add(loss, neg)?;
    }
    Ok(loss)
}

/// Plain-value twin of [`link_prediction_loss`].
pub fn link_prediction_loss_value<T: Scalar>(embedding: &Matrix<T>, positives: &[Edge], negatives: &[Edge]) -> T {
    if positives.is_empty() {
        return T::zero();
    }
    let dot = |(i, j): Edge| -> T { embedding.row(i).iter().zip(embedding.row(j)).map(|(&a, &b)| a * b).sum() };
    let mean = |pairs: &[Edge], f: &dyn Fn(T) -> T| -> T {
        pairs.iter().map(|&e| f(dot(e))).sum::<T>() / T::of_usize(pairs.len())
    };
    let mut loss = mean(positives, &|d| crate::autodiff::softplus(-d));
    if !negatives.is_empty() {
        loss += mean(negatives, &|d| crate::autodiff::softplus(d));
    }
    loss
}

/// `β̂ + ξ·L_lp + λ·(α̃ − α̂)`.
pub fn lagrangian<T: Scalar>(beta_hat: T, link_loss: T, lambda: T, alpha_tilde: T, alpha_hat: T, xi: T) -> T {
    beta_hat + xi * link_loss + lambda * (alpha_tilde - alpha_hat)
}

/// Everything one primal-dual step reads but never changes.
pub struct StepProblem<'a, T> {
    pub graph: &'a AttributedGraph<T>,
    pub input: &'a GraphInput<T>,
    /// Source nodes averaged into `β̂`.
    pub source: Rc<[usize]>,
    /// Target nodes averaged into `α̂` and ranked for the threshold.
    pub target: Rc<[usize]>,
    /// Nodes eligible for the link loss.
    pub link_nodes: Vec<usize>,
    pub alpha_tilde: f64,
    pub xi: f64,
    pub lr_dual: f64,
    pub mode: SamplingMode,
}

/// Mutable training state: model, optimizer, dual variable and two random
/// streams. Dropout and negative sampling draw from separate streams, so
/// runs that differ only in the link loss see identical dropout masks.
pub struct PrimalDualState<T, M> {
    pub model: M,
    pub adam: AdamState<T>,
    pub lambda: T,
    pub rng: SeededRng,
    pub sample_rng: SeededRng,
    pub step: usize,
}

impl<T: Scalar, M: ScoreModel<T>> PrimalDualState<T, M> {
    pub fn new(model: M, lr_primal: f64, lambda_init: f64, seed: u64) -> Self {
        Self {
            model,
            adam: AdamState::new(lr_primal),
            lambda: T::of(lambda_init),
            rng: seeded(seed),
            sample_rng: seeded(derive_seed(seed, 1)),
            step: 0,
        }
    }
}

/// Diagnostics of one step. `lambda` is the value after the dual update;
/// the other quantities come from the forward pass before the primal update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lambda: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub link_loss: f64,
    pub lagrangian: f64,
    pub threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    pub exhausted: bool,
}

/// One iteration: rebuild threshold and edge sets from the current scores,
/// descend the Lagrangian with Adam, then ascend `λ` and project onto `λ >= 0`.
pub fn primal_dual_step<T: Scalar, M: ScoreModel<T>>(
    state: &mut PrimalDualState<T, M>,
    problem: &StepProblem<'_, T>,
    audit: &mut LossAudit,
) -> Result<StepRecord> {
    let tape = Tape::new();
    let pass = state
        .model
        .forward(&tape, problem.input, Mode::Train(&mut state.rng))?;
    let beta = mean_score(&tape, pass.scores, &problem.source)?;
    let alpha = mean_score(&tape, pass.scores, &problem.target)?;
    let (alpha_hat, beta_hat) = (tape.item(alpha), tape.item(beta));

    let scores: Vec<T> = tape.value(pass.scores).as_slice().to_vec();
    let target_scores: Vec<T> = problem.target.iter().map(|&v| scores[v]).collect();
    let z = score_threshold(&target_scores, problem.alpha_tilde)?;

    let mut record = StepRecord {
        step: state.step,
        lambda: 0.0,
        alpha_hat: alpha_hat.as_f64(),
        beta_hat: beta_hat.as_f64(),
        link_loss: 0.0,
        lagrangian: 0.0,
        threshold: z.as_f64(),
        positives: 0,
        negatives: 0,
        exhausted: false,
    };

    let mut objective = beta;
    if let (Some(g), true) = (pass.embedding, problem.mode != SamplingMode::Off) {
        let sets = build_edge_sets(problem.graph, &scores, z, problem.mode, &problem.link_nodes)?;
        let negatives = sample_negatives(problem.graph, &sets, &mut state.sample_rng)?;
        audit.record_pairs(&sets.e_plus);
        audit.record_pairs(&negatives.edges);
        let link = link_prediction_loss(&tape, g, &sets.e_plus, &negatives.edges)?;
        record.link_loss = tape.item(link).as_f64();
        record.positives = sets.e_plus.len();
        record.negatives = negatives.edges.len();
        record.exhausted = negatives.exhausted;
        objective = tape.add(objective, tape.scale(link, T::of(problem.xi)))?;
    }
    let lambda = state.lambda;
    let penalty = tape.offset(tape.scale(alpha, -lambda), lambda * T::of(problem.alpha_tilde));
    let objective = tape.add(objective, penalty)?;
    record.lagrangian = tape.item(objective).as_f64();
    if !record.lagrangian.is_finite() {
        return Err(Error::NonFinite(format!(
            "Lagrangian at step {} (alpha_hat {}, beta_hat {}, lambda {}, link loss {})",
            state.step,
            record.alpha_hat,
            record.beta_hat,
            lambda,
            record.link_loss
        )));
    }

    let grads = tape.backward(objective)?;
    let grads: Vec<Matrix<T>> = {
        let tensors = state.model.tensors();
        pass.params
            .iter()
            .zip(tensors)
            .map(|(&v, like)| grads.get_or_zeros(v, like))
            .collect()
    };
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient at step {}", state.step)));
    }
    drop(tape);
    state.adam.step(&mut state.model.tensors_mut(), &grads);
    state.model.record_batch_stats(pass.batch_stats);

    let ascent = T::of(problem.lr_dual) * (T::of(problem.alpha_tilde) - alpha_hat);
    state.lambda = (lambda + ascent).max(T::zero());
    record.lambda = state.lambda.as_f64();
    state.step += 1;
    Ok(record)
}

/// A trained detector for one recall floor, scored on validation nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel<T> {
    pub model: Classifier<T>,
    pub alpha_tilde: f64,
    /// Validation recall proxy.
    pub alpha_hat: f64,
    /// Validation FPR proxy.
    pub beta_hat: f64,
    pub lambda_final: f64,
}

/// Summary row of the candidate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub alpha_tilde: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub lambda_final: f64,
    pub feasible: bool,
    pub selected: bool,
}

/// Index of the feasible candidate (`β̂ < β̃`) with the highest `α̂`; ties keep
/// the earlier one. Without any feasible candidate, the one with the lowest
/// `β̂` and `true` for "constraint unmet".
pub fn select_candidate(alpha_beta: &[(f64, f64)], beta_max: f64) -> Result<(usize, bool)> {
    if alpha_beta.is_empty() {
        return Err(Error::EmptySet("no candidates to select from".into()));
    }
    let mut best: Option<usize> = None;
    for (k, &(a, b)) in alpha_beta.iter().enumerate() {
        if b < beta_max && best.is_none_or(|i| a > alpha_beta[i].0) {
            best = Some(k);
        }
    }
    if let Some(k) = best {
        return Ok((k, false));
    }
    let mut low = 0;
    for (k, &(_, b)) in alpha_beta.iter().enumerate() {
        if b < alpha_beta[low].1 {
            low = k;
        }
    }
    Ok((low, true))
}

/// Output of [`run`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoSlipOutcome<T> {
    pub candidates: Vec<CandidateModel<T>>,
    pub selected: usize,
    pub constraint_unmet: bool,
    /// Step diagnostics per candidate.
    pub traces: Vec<Vec<StepRecord>>,
    pub audit: LossAudit,
}

impl<T: Scalar> RecoSlipOutcome<T> {
    pub fn selected_model(&self) -> &CandidateModel<T> {
        &self.candidates[self.selected]
    }

    pub fn table(&self, beta_max: f64) -> Vec<CandidateRow> {
        self.candidates
            .iter()
            .enumerate()
            .map(|(k, c)| CandidateRow {
                alpha_tilde: c.alpha_tilde,
                alpha_hat: c.alpha_hat,
                beta_hat: c.beta_hat,
                lambda_final: c.lambda_final,
                feasible: c.beta_hat < beta_max,
                selected: k == self.selected,
            })
            .collect()
    }
}

/// Training and validation node lists for a split assignment.
pub(crate) struct NodeLists {
    pub src_train: Vec<usize>,
    pub src_val: Vec<usize>,
    pub tgt_train: Vec<usize>,
    pub tgt_val: Vec<usize>,
}

impl NodeLists {
    pub fn new(splits: &SplitAssignment) -> Result<Self> {
        let lists = Self {
            src_train: splits.nodes(Split::SrcTrain),
            src_val: splits.nodes(Split::SrcVal),
            tgt_train: splits.nodes(Split::TgtTrain),
            tgt_val: splits.nodes(Split::TgtVal),
        };
        for (name, l) in [
            ("source train", &lists.src_train),
            ("source validation", &lists.src_val),
            ("target train", &lists.tgt_train),
            ("target validation", &lists.tgt_val),
        ] {
            if l.is_empty() {
                return Err(Error::EmptySet(format!("{name} split is empty")));
            }
        }
        Ok(lists)
    }
}

pub(crate) fn mean_at<T: Scalar>(scores: &[T], nodes: &[usize]) -> f64 {
    nodes.iter().map(|&v| scores[v].as_f64()).sum::<f64>() / nodes.len() as f64
}

/// Trains one candidate per recall floor and selects the final model.
/// Candidates are independent and run on the rayon pool.
pub fn run<T: Scalar>(
    graph: &AttributedGraph<T>,
    splits: &SplitAssignment,
    config: &RecoSlipConfig,
) -> Result<RecoSlipOutcome<T>> {
    config.validate()?;
    if splits.len() != graph.num_nodes() {
        return Err(Error::InvalidArgument("split assignment does not match the graph".into()));
    }
    let lists = NodeLists::new(splits)?;
    let input = GraphInput::new(graph);
    let mut model_config = config.model.clone();
    model_config.input_dim = graph.feature_dim();

    let trained: Vec<(CandidateModel<T>, Vec<StepRecord>, LossAudit)> = config
        .alpha_grid
        .par_iter()
        .enumerate()
        .map(|(k, &alpha_tilde)| {
            let seed = derive_seed(config.seed, k as u64);
            let model = Classifier::new(model_config.clone(), &mut seeded(derive_seed(seed, 0)));
            let link_nodes = match config.sampling_mode {
                SamplingMode::Selective | SamplingMode::TargetSubgraph => lists.tgt_train.clone(),
                SamplingMode::FullComplement => {
                    let mut all = lists.src_train.clone();
                    all.extend(&lists.tgt_train);
                    all.sort_unstable();
                    all
                }
                SamplingMode::Off => Vec::new(),
            };
            let problem = StepProblem {
                graph,
                input: &input,
                source: Rc::from(lists.src_train.as_slice()),
                target: Rc::from(lists.tgt_train.as_slice()),
                link_nodes,
                alpha_tilde,
                xi: config.xi,
                lr_dual: config.lr_dual,
                mode: config.sampling_mode,
            };
            let mut audit = LossAudit::new(graph.num_nodes());
            audit.record(&problem.source);
            audit.record(&problem.target);
            let mut state = PrimalDualState::new(model, config.lr_primal, config.lambda_init, derive_seed(seed, 1));
            let mut trace = Vec::with_capacity(config.steps);
            for _ in 0..config.steps {
                trace.push(primal_dual_step(&mut state, &problem, &mut audit)?);
            }
            let scores = state.model.scores(&input)?;
            audit.record(&lists.src_val);
            audit.record(&lists.tgt_val);
            let candidate = CandidateModel {
                alpha_tilde,
                alpha_hat: mean_at(&scores, &lists.tgt_val),
                beta_hat: mean_at(&scores, &lists.src_val),
                lambda_final: state.lambda.as_f64(),
                model: state.model,
            };
            Ok((candidate, trace, audit))
        })
        .collect::<Result<_>>()?;

    let mut audit = LossAudit::new(graph.num_nodes());
    let mut candidates = Vec::with_capacity(trained.len());
    let mut traces = Vec::with_capacity(trained.len());
    for (c, t, a) in trained {
        audit.merge(&a);
        candidates.push(c);
        traces.push(t);
    }
    let ab: Vec<(f64, f64)> = candidates.iter().map(|c| (c.alpha_hat, c.beta_hat)).collect();
    let (selected, constraint_unmet) = select_candidate(&ab, config.beta_max)?;
    if constraint_unmet {
        log::warn!(
            "no candidate reached validation FPR below {}; using the lowest ({})",
            config.beta_max,
            ab[selected].1
        );
    }
    Ok(RecoSlipOutcome {
        candidates,
        selected,
        constraint_unmet,
        traces,
        audit,
    })
}

/// Writes `candidates.csv` and `candidates.json` into `dir`.
pub fn write_candidate_table(rows: &[CandidateRow], constraint_unmet: bool, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("candidates.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Table<'r> {
        constraint_unmet: bool,
        candidates: &'r [CandidateRow],
    }
    let mut f = std::fs::File::create(dir.join("candidates.json"))?;
    serde_json::to_writer_pretty(
        &mut f,
        &Table {
            constraint_unmet,
            candidates: rows,
        },
    )?;
    writeln!(f)?;
    Ok(())
}
