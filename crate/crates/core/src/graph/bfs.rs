use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hop distance to the nearest source. `Unreachable` orders after every
/// finite distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Distance {
    Hops(usize),
    Unreachable,
}

impl Ord for Distance {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Distance::Hops(a), Distance::Hops(b)) => a.cmp(b),
            (Distance::Hops(_), Distance::Unreachable) => Ordering::Less,
            (Distance::Unreachable, Distance::Hops(_)) => Ordering::Greater,
            (Distance::Unreachable, Distance::Unreachable) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Distance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn multi_source_bfs<T: Scalar>(graph: &AttributedGraph<T>, sources: &[usize]) -> Result<Vec<Distance>> {
    if sources.is_empty() {
        return Err(Error::EmptySet("BFS needs at least one source node".into()));
    }
    let n = graph.num_nodes();
    let mut dist = vec![Distance::Unreachable; n];
    let mut queue = VecDeque::with_capacity(n);
    for &s in sources {
        if s >= n {
            return Err(Error::InvalidArgument(format!("source {s} outside 0..{n}")));
        }
        if dist[s] == Distance::Unreachable {
            dist[s] = Distance::Hops(0);
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let Distance::Hops(d) = dist[v] else {
            unreachable!("queued nodes have finite distance")
        };
        for &w in graph.neighbors(v) {
            if dist[w] == Distance::Unreachable {
                dist[w] = Distance::Hops(d + 1);
                queue.push_back(w);
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{path3, plain};
    use crate::graph::Domain;
    use Distance::*;

    #[test]
    fn path_from_one_end() {
        assert_eq!(multi_source_bfs(&path3(), &[0]).unwrap(), vec![Hops(0), Hops(1), Hops(2)]);
    }

    #[test]
    fn minimum_over_sources() {
        assert_eq!(multi_source_bfs(&path3(), &[0, 2]).unwrap(), vec![Hops(0), Hops(1), Hops(0)]);
    }

    #[test]
    fn disconnected_node_is_unreachable() {
        let g = plain(&[Domain::Source, Domain::Target, Domain::Target], &[(0, 1)]);
        let d = multi_source_bfs(&g, &[0]).unwrap();
        assert_eq!(d[2], Unreachable);
        assert!(Unreachable > Hops(usize::MAX));
    }

    #[test]
    fn empty_sources_rejected() {
        assert!(multi_source_bfs(&path3(), &[]).is_err());
    }
}
