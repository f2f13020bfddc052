use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{canonical, AttributedGraph, Domain, Edge};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Class of an unordered node pair with respect to the edge set and domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComplementClass {
    SourceSource,
    SourceTarget,
    TargetTarget,
    /// The pair is an edge of the graph.
    NotComplement,
}

pub fn classify_complement_pair<T: Scalar>(
    graph: &AttributedGraph<T>,
    i: usize,
    j: usize,
) -> Result<ComplementClass> {
    if i == j {
        return Err(Error::InvalidArgument(format!("pair ({i}, {i}) is not a node pair")));
    }
    let n = graph.num_nodes();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument(format!("pair ({i}, {j}) outside 0..{n}")));
    }
    if graph.has_edge(i, j) {
        return Ok(ComplementClass::NotComplement);
    }
    let d = graph.domains()?;
    Ok(match (d[i], d[j]) {
        (Domain::Source, Domain::Source) => ComplementClass::SourceSource,
        (Domain::Target, Domain::Target) => ComplementClass::TargetTarget,
        _ => ComplementClass::SourceTarget,
    })
}

/// Output of [`sample_complement_edges`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplementSample {
    pub edges: Vec<Edge>,
    /// Set when the candidate subgraph is complete, so no non-edge exists.
    pub exhausted: bool,
}

/// Number of graph edges with both endpoints in `nodes` (which must be distinct).
pub fn count_internal_edges<T: Scalar>(graph: &AttributedGraph<T>, nodes: &[usize]) -> usize {
    let mut member = vec![false; graph.num_nodes()];
    for &v in nodes {
        member[v] = true;
    }
    let twice: usize = nodes
        .iter()
        .map(|&v| graph.neighbors(v).iter().filter(|&&w| member[w]).count())
        .sum();
    twice / 2
}

/// Draws `count` non-edges uniformly from `candidates × candidates` by
/// rejection. Draws are independent, so a pair may repeat.
pub fn sample_complement_edges<T: Scalar, R: Rng + ?Sized>(
    graph: &AttributedGraph<T>,
    candidates: &[usize],
    count: usize,
    rng: &mut R,
) -> Result<ComplementSample> {
    let mut nodes = candidates.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "complement sampling needs at least 2 candidate nodes, got {}",
            nodes.len()
        )));
    }
    if let Some(&v) = nodes.last().filter(|&&v| v >= graph.num_nodes()) {
        return Err(Error::InvalidArgument(format!("candidate {v} outside the graph")));
    }
    let k = nodes.len();
    if count == 0 {
        return Ok(ComplementSample::default());
    }
    if count_internal_edges(graph, &nodes) == k * (k - 1) / 2 {
        return Ok(ComplementSample {
            edges: Vec::new(),
            exhausted: true,
        });
    }
    let mut edges = Vec::with_capacity(count);
    while edges.len() < count {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let (i, j) = (nodes[a], nodes[b]);
        if !graph.has_edge(i, j) {
            edges.push(canonical(i, j));
        }
    }
    Ok(ComplementSample {
        edges,
        exhausted: false,
    })
}
