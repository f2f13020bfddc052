//! Losses and statistics over novelty scores.
//!
//! Sign convention, fixed once: a score is the probability that a node is
//! *novel*. In PU terms the labelled positives are the source nodes, which
//! are all non-novel, and the unlabelled set is the target domain. Every
//! loss below names its labels in novelty terms.
//!
//! Each objective exists twice: as a plain function over score slices (used
//! for validation, early stopping and reports) and as a tape function whose
//! gradient flows back into the model.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Domain;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before any log.
pub const SCORE_CLAMP: f64 = 1e-7;

/// Smallest prior the estimator reports; keeps the result strictly positive.
pub const MIN_PRIOR: f64 = 1e-6;

fn check_subset(domains: &[Domain], subset: &[usize], want: Domain, op: &str) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySet(format!("{op} needs at least one node")));
    }
    for &v in subset {
        match domains.get(v) {
            None => return Err(Error::InvalidArgument(format!("{op}: node {v} out of range"))),
            Some(&d) if d != want => {
                return Err(Error::InvalidArgument(format!(
                    "{op}: node {v} is {:?}, expected {want:?}",
                    d
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

fn mean_at<T: Scalar>(scores: &[T], subset: &[usize], f: impl Fn(T) -> T) -> T {
    subset.iter().map(|&v| f(scores[v])).sum::<T>() / T::of_usize(subset.len())
}

fn clamp_score<T: Scalar>(s: T) -> T {
    let eps = T::of(SCORE_CLAMP);
    s.max(eps).min(T::one() - eps)
}

/// Cross-entropy of a score against the label "novel": `-ln s`.
pub fn loss_novel<T: Scalar>(s: T) -> T {
    -clamp_score(s).ln()
}

/// Cross-entropy of a score against the label "non-novel": `-ln(1 - s)`.
pub fn loss_nonnovel<T: Scalar>(s: T) -> T {
    -(T::one() - clamp_score(s)).ln()
}

/// Mean score over source nodes: the false-positive-rate proxy `β̂`.
pub fn empirical_fpr<T: Scalar>(scores: &[T], domains: &[Domain], subset: &[usize]) -> Result<T> {
    check_subset(domains, subset, Domain::Source, "empirical_fpr")?;
    Ok(mean_at(scores, subset, |s| s))
}

/// Mean score over target nodes: the recall proxy `α̂`.
pub fn empirical_recall<T: Scalar>(scores: &[T], domains: &[Domain], subset: &[usize]) -> Result<T> {
    check_subset(domains, subset, Domain::Target, "empirical_recall")?;
    Ok(mean_at(scores, subset, |s| s))
}

/// Binary cross-entropy with target nodes labelled novel and source nodes
/// labelled non-novel, averaged over `nodes`.
pub fn domain_bce_loss<T: Scalar>(scores: &[T], domains: &[Domain], nodes: &[usize]) -> Result<T> {
    if nodes.is_empty() {
        return Err(Error::EmptySet("domain_bce_loss needs at least one node".into()));
    }
    let total: T = nodes
        .iter()
        .map(|&v| match domains[v] {
            Domain::Target => loss_novel(scores[v]),
            Domain::Source => loss_nonnovel(scores[v]),
        })
        .sum();
    Ok(total / T::of_usize(nodes.len()))
}

/// BCE against explicit per-node novelty labels.
pub fn labelled_bce_loss<T: Scalar>(scores: &[T], novel: &[bool], nodes: &[usize]) -> Result<T> {
    if nodes.is_empty() {
        return Err(Error::EmptySet("labelled_bce_loss needs at least one node".into()));
    }
    let total: T = nodes
        .iter()
        .map(|&v| if novel[v] { loss_novel(scores[v]) } else { loss_nonnovel(scores[v]) })
        .sum();
    Ok(total / T::of_usize(nodes.len()))
}

/// The three empirical means the PU risks are built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PuTerms<T> {
    /// Source nodes scored against "non-novel".
    pub source_nonnovel: T,
    /// Target nodes scored against "novel".
    pub target_novel: T,
    /// Source nodes scored against "novel".
    pub source_novel: T,
}

impl<T: Scalar> PuTerms<T> {
    pub fn new(scores: &[T], source: &[usize], target: &[usize]) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::EmptySet("PU risk needs source and target nodes".into()));
        }
        Ok(Self {
            source_nonnovel: mean_at(scores, source, loss_nonnovel),
            target_novel: mean_at(scores, target, loss_novel),
            source_novel: mean_at(scores, source, loss_novel),
        })
    }

    /// The term that stands in for the negatives' risk; it may be negative.
    pub fn bracket(&self, pi: T) -> T {
        self.target_novel - pi * self.source_novel
    }

    pub fn upu(&self, pi: T) -> T {
        pi * self.source_nonnovel + self.bracket(pi)
    }

    pub fn nnpu(&self, pi: T) -> T {
        pi * self.source_nonnovel + self.bracket(pi).max(T::zero())
    }
}

fn check_prior<T: Scalar>(pi: T) -> Result<()> {
    if !(pi >= T::zero() && pi <= T::one()) {
        return Err(Error::InvalidArgument(format!("class prior {pi} outside [0, 1]")));
    }
    Ok(())
}

/// Unbiased PU risk with source nodes as labelled positives.
pub fn upu_risk<T: Scalar>(scores: &[T], domains: &[Domain], nodes: &[usize], pi: T) -> Result<T> {
    check_prior(pi)?;
    let (s, t) = split_by_domain(domains, nodes);
    Ok(PuTerms::new(scores, &s, &t)?.upu(pi))
}

/// Non-negative PU risk: the uPU bracket clamped at zero.
pub fn nnpu_risk<T: Scalar>(scores: &[T], domains: &[Domain], nodes: &[usize], pi: T) -> Result<T> {
    check_prior(pi)?;
    let (s, t) = split_by_domain(domains, nodes);
    Ok(PuTerms::new(scores, &s, &t)?.nnpu(pi))
}

/// Partitions `nodes` into (source, target), preserving order.
pub fn split_by_domain(domains: &[Domain], nodes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    nodes.iter().partition(|&&v| domains[v] == Domain::Source)
}

/// Differentiable counterparts. `scores` is an `n x 1` column on the tape.
pub mod tape {
    use super::*;

    fn clamped<T: Scalar>(tape: &Tape<'_, T>, scores: Var) -> Var {
        let eps = T::of(SCORE_CLAMP);
        tape.clamp(scores, eps, T::one() - eps)
    }

    /// Per-node `-ln s` as a column.
    pub fn loss_novel<T: Scalar>(tape: &Tape<'_, T>, scores: Var) -> Var {
        let l = tape.log(clamped(tape, scores));
        tape.scale(l, -T::one())
    }

    /// Per-node `-ln(1 - s)` as a column.
    pub fn loss_nonnovel<T: Scalar>(tape: &Tape<'_, T>, scores: Var) -> Var {
        let l = tape.log(tape.one_minus(clamped(tape, scores)));
        tape.scale(l, -T::one())
    }

    /// Mean score over `nodes`; with source nodes this is `β̂`, with target
    /// nodes `α̂`.
    pub fn mean_score<T: Scalar>(tape: &Tape<'_, T>, scores: Var, nodes: &Rc<[usize]>) -> Result<Var> {
        tape.masked_mean(scores, nodes.clone())
    }

    /// Domain BCE; source and target sets are averaged jointly.
    pub fn domain_bce_loss<T: Scalar>(
        tape: &Tape<'_, T>,
        scores: Var,
        source: &Rc<[usize]>,
        target: &Rc<[usize]>,
    ) -> Result<Var> {
        let n = source.len() + target.len();
        if n == 0 {
            return Err(Error::EmptySet("domain_bce_loss needs at least one node".into()));
        }
        weighted_sum(
            tape,
            &[
                (loss_nonnovel(tape, scores), source, source.len()),
                (loss_novel(tape, scores), target, target.len()),
            ],
            n,
        )
    }

    /// BCE where `novel` and `nonnovel` list the nodes of each label.
    pub fn labelled_bce_loss<T: Scalar>(
        tape: &Tape<'_, T>,
        scores: Var,
        nonnovel: &Rc<[usize]>,
        novel: &Rc<[usize]>,
    ) -> Result<Var> {
        domain_bce_loss(tape, scores, nonnovel, novel)
    }

    // Σ_k (|S_k| / n) · mean_{S_k}(column_k), skipping empty sets.
    fn weighted_sum<T: Scalar>(tape: &Tape<'_, T>, parts: &[(Var, &Rc<[usize]>, usize)], n: usize) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(col, nodes, len) in parts {
            if len == 0 {
                continue;
            }
            let m = tape.masked_mean(col, (*nodes).clone())?;
            let w = tape.scale(m, T::of_usize(len) / T::of_usize(n));
            acc = Some(match acc {
                Some(a) => tape.add(a, w)?,
                None => w,
            });
        }
        acc.ok_or_else(|| Error::EmptySet("no nodes to average".into()))
    }

    /// The uPU pieces recorded on the tape: `(π·E_S ℓ(nonnovel), bracket)`.
    pub fn pu_parts<T: Scalar>(
        tape: &Tape<'_, T>,
        scores: Var,
        source: &Rc<[usize]>,
        target: &Rc<[usize]>,
        pi: T,
    ) -> Result<(Var, Var)> {
        check_prior(pi)?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::EmptySet("PU risk needs source and target nodes".into()));
        }
        let ln_nov = loss_novel(tape, scores);
        let ln_non = loss_nonnovel(tape, scores);
        let pos = tape.scale(tape.masked_mean(ln_non, source.clone())?, pi);
        let unl = tape.masked_mean(ln_nov, target.clone())?;
        let pos_as_neg = tape.scale(tape.masked_mean(ln_nov, source.clone())?, pi);
        Ok((pos, tape.sub(unl, pos_as_neg)?))
    }

    pub fn upu_risk<T: Scalar>(
        tape: &Tape<'_, T>,
        scores: Var,
        source: &Rc<[usize]>,
        target: &Rc<[usize]>,
        pi: T,
    ) -> Result<Var> {
        let (pos, bracket) = pu_parts(tape, scores, source, target, pi)?;
        tape.add(pos, bracket)
    }

    /// nnPU: when the bracket is negative it is replaced by zero, which also
    /// removes its gradient for that step.
    pub fn nnpu_risk<T: Scalar>(
        tape: &Tape<'_, T>,
        scores: Var,
        source: &Rc<[usize]>,
        target: &Rc<[usize]>,
        pi: T,
    ) -> Result<Var> {
        let (pos, bracket) = pu_parts(tape, scores, source, target, pi)?;
        if tape.item(bracket) >= T::zero() {
            tape.add(pos, bracket)
        } else {
            let zero = tape.constant(Matrix::scalar(T::zero()));
            tape.add(pos, zero)
        }
    }
}

/// Result of the best-bin mixture-proportion estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEstimate {
    /// Estimated share of non-novel nodes in the target domain.
    pub pi_nonnovel: f64,
    /// Score cut-off `c` that attained the minimum; `None` when no bin had
    /// enough positive mass.
    pub threshold: Option<f64>,
    /// Fraction of positives with score `<= c`.
    pub positive_mass: f64,
    /// Fraction of unlabelled scores `<= c`.
    pub unlabelled_mass: f64,
    pub positives: usize,
    pub unlabelled: usize,
    /// Set when no threshold met `delta` and the estimate fell back to 1.
    pub warning: bool,
}

impl PriorEstimate {
    /// Implied novel ratio of the target domain.
    pub fn novel_ratio(&self) -> f64 {
        1.0 - self.pi_nonnovel
    }
}

/// Best-bin estimate of the non-novel share among unlabelled scores.
///
/// Low scores are the most non-novel bin. For every observed score `c` with
/// at least `delta` of the positives at or below it, the ratio
/// `q_u(c) / q_p(c)` upper-bounds the prior; the smallest ratio wins.
pub fn bbe_prior<T: Scalar>(positives: &[T], unlabelled: &[T], delta: f64) -> Result<PriorEstimate> {
    if positives.is_empty() || unlabelled.is_empty() {
        return Err(Error::EmptySet("bbe_prior needs positive and unlabelled scores".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("bbe delta {delta} outside (0, 1)")));
    }
    let sorted = |xs: &[T]| -> Result<Vec<f64>> {
        let mut v: Vec<f64> = xs.iter().map(|x| x.as_f64()).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("bbe_prior scores".into()));
        }
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let p = sorted(positives)?;
    let u = sorted(unlabelled)?;
    let mut candidates: Vec<f64> = p.iter().chain(&u).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let frac_le = |xs: &[f64], c: f64| xs.partition_point(|&x| x <= c) as f64 / xs.len() as f64;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &c in &candidates {
        let qp = frac_le(&p, c);
        if qp < delta {
            continue;
        }
        let qu = frac_le(&u, c);
        let ratio = qu / qp;
        if best.is_none_or(|(r, ..)| ratio < r) {
            best = Some((ratio, c, qp, qu));
        }
    }
    Ok(match best {
        Some((ratio, c, qp, qu)) => PriorEstimate {
            pi_nonnovel: ratio.clamp(MIN_PRIOR, 1.0),
            threshold: Some(c),
            positive_mass: qp,
            unlabelled_mass: qu,
            positives: p.len(),
            unlabelled: u.len(),
            warning: false,
        },
        None => PriorEstimate {
            pi_nonnovel: 1.0,
            threshold: None,
            positive_mass: 0.0,
            unlabelled_mass: 0.0,
            positives: p.len(),
            unlabelled: u.len(),
            warning: true,
        },
    })
}
