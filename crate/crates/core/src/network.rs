//! Undirected, connected communication graphs with 0-based node indices.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ERDOS_RENYI_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Hub at node 0, every other node a leaf.
    Star,
    Cycle,
    ErdosRenyi { p: f64, seed: u64 },
}

/// Undirected graph without self-loops. Edges are stored once as `(i, j)` with
/// `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Graph from an explicit edge list. Duplicates and both orientations of the
    /// same pair collapse to one edge. Connectivity is not required here; see
    /// [`NetworkGraph::connected_from_edges`].
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Config(format!("edge ({i}, {j}) references a node outside 0..{n}")));
            }
            if i == j {
                return Err(Error::Config(format!("self-loop at node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(NetworkGraph { n, edges, neighbors })
    }

    pub fn connected_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges(n, edges)?;
        if !g.is_connected() {
            return Err(Error::Config(format!("graph on {n} nodes is not connected")));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }
}

pub fn build_topology(kind: &Topology, n: usize) -> Result<NetworkGraph> {
    if n < 2 {
        return Err(Error::Config(format!("a network needs at least 2 agents, got {n}")));
    }
    match kind {
        Topology::Star => {
            let edges: Vec<_> = (1..n).map(|j| (0, j)).collect();
            NetworkGraph::from_edges(n, &edges)
        }
        Topology::Cycle => {
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            NetworkGraph::from_edges(n, &edges)
        }
        Topology::ErdosRenyi { p, seed } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("edge probability must lie in [0, 1], got {p}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..ERDOS_RENYI_RETRIES {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.gen_bool(*p) {
                            edges.push((i, j));
                        }
                    }
                }
                let g = NetworkGraph::from_edges(n, &edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Generation(format!(
                "no connected G({n}, {p}) sample in {ERDOS_RENYI_RETRIES} attempts"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_example() {
        let g = build_topology(&Topology::Star, 4).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (0, 3)]);
        assert!(g.is_connected());
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!(g.neighbors(2), &[0]);
    }

    #[test]
    fn cycle_examples() {
        let g = build_topology(&Topology::Cycle, 30).unwrap();
        assert_eq!(g.edges().len(), 30);
        assert!((0..30).all(|i| g.degree(i) == 2));
        assert!(g.is_connected());
        let two = build_topology(&Topology::Cycle, 2).unwrap();
        assert_eq!(two.edges(), &[(0, 1)]);
    }

    #[test]
    fn edge_counts() {
        for n in 3..12 {
            assert_eq!(build_topology(&Topology::Star, n).unwrap().edges().len(), n - 1);
            assert_eq!(build_topology(&Topology::Cycle, n).unwrap().edges().len(), n);
        }
    }

    #[test]
    fn connectivity_examples() {
        let split = NetworkGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!split.is_connected());
        assert!(NetworkGraph::from_edges(1, &[]).unwrap().is_connected());
        assert!(NetworkGraph::connected_from_edges(4, &[(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn symmetric_neighbor_lists() {
        let g = build_topology(&Topology::ErdosRenyi { p: 0.3, seed: 42 }, 15).unwrap();
        for i in 0..g.n() {
            assert!(!g.neighbors(i).contains(&i));
            for &j in g.neighbors(i) {
                assert!(g.neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn erdos_renyi_is_reproducible() {
        let kind = Topology::ErdosRenyi { p: 0.3, seed: 42 };
        let a = build_topology(&kind, 30).unwrap();
        let b = build_topology(&kind, 30).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        let c = build_topology(&Topology::ErdosRenyi { p: 0.3, seed: 43 }, 30).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_topology(&Topology::Star, 1), Err(Error::Config(_))));
        assert!(matches!(
            build_topology(&Topology::ErdosRenyi { p: 0.0, seed: 1 }, 5),
            Err(Error::Generation(_))
        ));
        assert!(NetworkGraph::from_edges(3, &[(0, 0)]).is_err());
        assert!(NetworkGraph::from_edges(3, &[(0, 3)]).is_err());
    }
}
