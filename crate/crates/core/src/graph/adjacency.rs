use super::AttributedGraph;
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, the symmetric GCN propagation operator.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency<T>(CsrMatrix<T>);

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn as_csr(&self) -> &CsrMatrix<T> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0.get(i, j)
    }
}

pub fn normalized_adjacency<T: Scalar>(graph: &AttributedGraph<T>) -> NormalizedAdjacency<T> {
    let n = graph.num_nodes();
    let inv_sqrt: Vec<T> = (0..n)
        .map(|v| T::one() / T::of_usize(graph.degree(v) + 1).sqrt())
        .collect();
    let mut triplets = Vec::with_capacity(n + 2 * graph.num_edges());
    for v in 0..n {
        triplets.push((v, v, inv_sqrt[v] * inv_sqrt[v]));
    }
    for &(i, j) in graph.edges() {
        let w = inv_sqrt[i] * inv_sqrt[j];
        triplets.push((i, j, w));
        triplets.push((j, i, w));
    }
    NormalizedAdjacency(
        CsrMatrix::from_triplets(n, n, triplets).expect("graph edges are in range"),
    )
}
