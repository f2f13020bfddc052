//! Train/validation/test assignment of nodes, stratified by domain.
//!
//! The setting is transductive: every node takes part in message passing,
//! but only nodes of the designated splits enter losses and metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Domain};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    SrcTrain,
    SrcVal,
    TgtTrain,
    TgtVal,
    TgtTest,
}

impl Split {
    pub const ALL: [Split; 5] = [Split::SrcTrain, Split::SrcVal, Split::TgtTrain, Split::TgtVal, Split::TgtTest];

    pub fn domain(self) -> Domain {
        match self {
            Split::SrcTrain | Split::SrcVal => Domain::Source,
            _ => Domain::Target,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::SrcTrain => "src_train",
            Split::SrcVal => "src_val",
            Split::TgtTrain => "tgt_train",
            Split::TgtVal => "tgt_val",
            Split::TgtTest => "tgt_test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Smallest domain [`make_splits`] accepts.
pub const MIN_DOMAIN_SIZE: usize = 5;

/// One split per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    splits: Vec<Split>,
}

impl SplitAssignment {
    /// Checks that every split agrees with the node's domain.
    pub fn new(splits: Vec<Split>, domains: &[Domain]) -> Result<Self> {
        if splits.len() != domains.len() {
            return Err(Error::InvalidArgument(format!(
                "{} split labels for {} nodes",
                splits.len(),
                domains.len()
            )));
        }
        if let Some(v) = (0..splits.len()).find(|&v| splits[v].domain() != domains[v]) {
            return Err(Error::InvalidArgument(format!(
                "node {v} is {:?} but assigned to {}",
                domains[v],
                splits[v].name()
            )));
        }
        Ok(Self { splits })
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn get(&self, v: usize) -> Split {
        self.splits[v]
    }

    pub fn as_slice(&self) -> &[Split] {
        &self.splits
    }

    /// Nodes of one split, ascending.
    pub fn nodes(&self, split: Split) -> Vec<usize> {
        self.nodes_in(&[split])
    }

    /// Nodes belonging to any of `splits`, ascending.
    pub fn nodes_in(&self, splits: &[Split]) -> Vec<usize> {
        (0..self.splits.len()).filter(|&v| splits.contains(&self.splits[v])).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }
}

/// Source nodes 80/20 into train/val, target nodes 60/20/20 into
/// train/val/test, with counts rounded per domain and a seeded shuffle.
pub fn make_splits<T: Scalar>(graph: &AttributedGraph<T>, seed: u64) -> Result<SplitAssignment> {
    let domains = graph.domains()?;
    let mut splits = vec![Split::TgtTest; graph.num_nodes()];
    let plan: [(Domain, &[(Split, f64)]); 2] = [
        (Domain::Source, &[(Split::SrcTrain, 0.8), (Split::SrcVal, 0.2)]),
        (
            Domain::Target,
            &[(Split::TgtTrain, 0.6), (Split::TgtVal, 0.2), (Split::TgtTest, 0.2)],
        ),
    ];
    for (stream, (domain, parts)) in plan.into_iter().enumerate() {
        let mut nodes = graph.nodes_in(domain)?;
        if nodes.len() < MIN_DOMAIN_SIZE {
            return Err(Error::InvalidArgument(format!(
                "{domain:?} domain has {} nodes, at least {MIN_DOMAIN_SIZE} are needed for splitting",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut seeded(derive_seed(seed, 100 + stream as u64)));
        let n = nodes.len();
        let mut start = 0;
        for (k, &(split, frac)) in parts.iter().enumerate() {
            let end = if k + 1 == parts.len() {
                n
            } else {
                (start + (frac * n as f64).round() as usize).min(n)
            };
            for &v in &nodes[start..end] {
                splits[v] = split;
            }
            start = end;
        }
    }
    SplitAssignment::new(splits, domains)
}

/// Writes `node_id,split` rows.
pub fn write_splits(path: &Path, splits: &SplitAssignment) -> Result<()> {
    let mut out = String::from("node_id,split\n");
    for (v, s) in splits.as_slice().iter().enumerate() {
        out += &format!("{v},{}\n", s.name());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`write_splits`] and checks it against `domains`.
pub fn read_splits(path: &Path, domains: &[Domain]) -> Result<SplitAssignment> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
    };
    let (id_col, split_col) = (col("node_id")?, col("split")?);
    let mut splits = vec![None; domains.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: rec.position().map_or(0, |p| p.line() as usize),
            msg,
        };
        let v: usize = rec[id_col]
            .parse()
            .ok()
            .filter(|&v| v < domains.len())
            .ok_or_else(|| err(format!("bad node_id `{}`", &rec[id_col])))?;
        let s = Split::parse(&rec[split_col]).ok_or_else(|| err(format!("unknown split `{}`", &rec[split_col])))?;
        if splits[v].replace(s).is_some() {
            return Err(err(format!("node {v} listed twice")));
        }
    }
    let splits = splits
        .into_iter()
        .enumerate()
        .map(|(v, s)| s.ok_or_else(|| Error::InvalidArgument(format!("{}: node {v} missing", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    SplitAssignment::new(splits, domains)
}

/// Record of every node that entered a loss or a statistic during training
/// and model selection. Used to check that test nodes never leak.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossAudit {
    touched: Vec<bool>,
}

impl LossAudit {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            touched: vec![false; num_nodes],
        }
    }

    pub fn record(&mut self, nodes: &[usize]) {
        for &v in nodes {
            self.touched[v] = true;
        }
    }

    pub fn record_pairs(&mut self, pairs: &[(usize, usize)]) {
        for &(i, j) in pairs {
            self.touched[i] = true;
            self.touched[j] = true;
        }
    }

    pub fn merge(&mut self, other: &LossAudit) {
        for (a, &b) in self.touched.iter_mut().zip(&other.touched) {
            *a |= b;
        }
    }

    pub fn touched(&self) -> Vec<usize> {
        (0..self.touched.len()).filter(|&v| self.touched[v]).collect()
    }

    /// True when any node of `split` was used.
    pub fn touches(&self, splits: &SplitAssignment, split: Split) -> bool {
        (0..self.touched.len()).any(|v| self.touched[v] && splits.get(v) == split)
    }
}
