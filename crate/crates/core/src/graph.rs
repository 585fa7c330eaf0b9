//! Undirected communication topologies.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigen;
use crate::{Error, Result};

/// An undirected, unweighted graph on `n_agents` nodes.
///
/// Edges are stored once each with the smaller index first and kept in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = Error;

    fn try_from(r: TopologyRepr) -> Result<Self> {
        Topology::new(r.n_agents, &r.edges)
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr { n_agents: t.n_agents, edges: t.edges }
    }
}

impl Topology {
    /// Builds a topology, rejecting self-loops, duplicates (in either
    /// orientation) and out-of-range indices.
    pub fn new(n_agents: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Topology("a topology needs at least one agent".into()));
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in edge_list {
            if i >= n_agents || j >= n_agents {
                return Err(Error::Topology(format!("edge ({i}, {j}) has an index outside [0, {n_agents})")));
            }
            if i == j {
                return Err(Error::Topology(format!("edge ({i}, {j}) is a self-loop")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::Topology(format!("edge ({i}, {j}) is a duplicate")));
            }
        }
        Ok(Self { n_agents, edges: seen.into_iter().collect() })
    }

    pub fn ring(n: usize) -> Result<Self> {
        let edges: Vec<_> = match n {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    /// Star with node 0 at the hub.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    /// Eight-agent benchmark graph: an 8-cycle with chords (0,4) and (1,5).
    pub fn benchmark() -> Self {
        let mut edges: Vec<_> = (0..8).map(|i| (i, (i + 1) % 8)).collect();
        edges.extend([(0, 4), (1, 5)]);
        Self::new(8, &edges).expect("benchmark topology is valid")
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Normalized edges, `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_agents, self.n_agents);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Neighbor lists indexed by agent.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_agents];
        for &(i, j) in &self.edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        nb
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    /// Laplacian `L = D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n_agents, self.n_agents);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// Connectivity by breadth-first traversal.
    pub fn is_connected(&self) -> bool {
        let nb = self.neighbors();
        let mut visited = vec![false; self.n_agents];
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &nb[u] {
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_agents
    }

    pub fn spectral_info(&self) -> Result<SpectralInfo> {
        let laplacian = self.laplacian();
        let eigenvalues = symmetric_eigen(&laplacian)?.values;
        let fiedler = if eigenvalues.len() > 1 { eigenvalues[1] } else { 0.0 };
        Ok(SpectralInfo { laplacian, eigenvalues, fiedler })
    }
}

/// Laplacian together with its ascending spectrum.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    pub laplacian: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// Second-smallest Laplacian eigenvalue (zero for a single agent).
    pub fiedler: f64,
}

impl SpectralInfo {
    /// Spectral connectivity test, used only as a cross-check of
    /// [`Topology::is_connected`].
    pub fn spectrally_connected(&self) -> bool {
        self.eigenvalues.len() == 1 || self.fiedler > 1e-9
    }
}
