//! Attributed graphs with a source/target domain split.
//!
//! Edges are undirected and stored once as canonical `(min, max)` pairs; a
//! sorted neighbour list per node is derived at construction for O(log d)
//! membership tests.

mod adjacency;
mod bfs;
mod complement;
pub mod io;

pub use adjacency::{normalized_adjacency, NormalizedAdjacency};
pub use bfs::{multi_source_bfs, Distance};
pub use complement::{
    classify_complement_pair, count_internal_edges, sample_complement_edges, ComplementClass,
    ComplementSample,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Which side of the shift a node was observed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn code(self) -> &'static str {
        match self {
            Domain::Source => "S",
            Domain::Target => "T",
        }
    }
}

/// Undirected edge in canonical form, `0 < 1`.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Immutable attributed graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph<T> {
    features: Matrix<T>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    domains: Option<Vec<Domain>>,
    categories: Vec<Option<u32>>,
    novel: Option<Vec<bool>>,
}

impl<T: Scalar> AttributedGraph<T> {
    /// Validates and canonicalizes. Self-loops and out-of-range endpoints are
    /// rejected; the reverse copy of an already present edge is merged.
    pub fn new(
        features: Matrix<T>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        domains: Option<Vec<Domain>>,
        categories: Vec<Option<u32>>,
        novel: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = features.rows();
        if !features.is_finite() {
            return Err(Error::InvalidGraph("features contain NaN or Inf".into()));
        }
        if categories.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} category entries for {n} nodes",
                categories.len()
            )));
        }
        let mut canon = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            canon.push(canonical(i, j));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &canon {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let graph = Self {
            features,
            edges: canon,
            neighbors,
            domains: None,
            categories,
            novel: None,
        };
        graph.with_labels(domains, novel)
    }

    /// Copy with domain labels and novel mask replaced.
    pub fn with_labels(mut self, domains: Option<Vec<Domain>>, novel: Option<Vec<bool>>) -> Result<Self> {
        let n = self.num_nodes();
        if let Some(d) = &domains {
            if d.len() != n {
                return Err(Error::InvalidGraph(format!("{} domain labels for {n} nodes", d.len())));
            }
        }
        if let Some(m) = &novel {
            if m.len() != n {
                return Err(Error::InvalidGraph(format!("{} novel flags for {n} nodes", m.len())));
            }
            if let Some(d) = &domains {
                if let Some(v) = (0..n).find(|&v| m[v] && d[v] == Domain::Source) {
                    return Err(Error::InvalidGraph(format!(
                        "node {v} is marked novel but lies in the source domain"
                    )));
                }
            }
        }
        self.domains = domains;
        self.novel = novel;
        Ok(self)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = if self.neighbors[i].len() <= self.neighbors[j].len() {
            (i, j)
        } else {
            (j, i)
        };
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn has_domains(&self) -> bool {
        self.domains.is_some()
    }

    pub fn domains(&self) -> Result<&[Domain]> {
        self.domains
            .as_deref()
            .ok_or_else(|| Error::InvalidGraph("domain labels have not been assigned".into()))
    }

    pub fn categories(&self) -> &[Option<u32>] {
        &self.categories
    }

    pub fn novel_mask(&self) -> Option<&[bool]> {
        self.novel.as_deref()
    }

    /// Nodes in the given domain, ascending.
    pub fn nodes_in(&self, domain: Domain) -> Result<Vec<usize>> {
        Ok(self
            .domains()?
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == domain)
            .map(|(v, _)| v)
            .collect())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Featureless graph (one constant feature) with the given domains.
    pub fn plain(domains: &[Domain], edges: &[(usize, usize)]) -> AttributedGraph<f64> {
        let n = domains.len();
        AttributedGraph::new(
            Matrix::filled(n, 1, 1.0),
            edges.iter().copied(),
            Some(domains.to_vec()),
            vec![None; n],
            None,
        )
        .unwrap()
    }

    pub fn path3() -> AttributedGraph<f64> {
        plain(&[Domain::Source, Domain::Target, Domain::Target], &[(0, 1), (1, 2)])
    }
}
