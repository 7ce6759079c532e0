//! Undirected weighted topologies and piecewise-constant switching schedules.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance for deciding that a Laplacian eigenvalue is zero.
pub const ZERO_EIGEN_RTOL: f64 = 1e-9;

/// Undirected graph on `n` agents with a symmetric nonnegative adjacency
/// matrix and zero diagonal. `a_ij > 0` iff `(i, j)` is an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    weights: Vec<f64>,
}

impl Topology {
    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Topology { n, weights: vec![0.0; n * n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Topology::empty(n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Construction(format!("edge ({i}, {j}) out of range for {n} agents")));
            }
            if i == j {
                return Err(Error::Construction(format!("self-loop on agent {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Construction(format!("edge ({i}, {j}) has nonpositive weight {w}")));
            }
            if g.weight(i, j) != 0.0 {
                return Err(Error::Construction(format!("duplicate edge ({i}, {j})")));
            }
            g.weights[i * n + j] = w;
            g.weights[j * n + i] = w;
        }
        Ok(g)
    }

    /// Unit-weight cycle `0 - 1 - ... - (n-1) - 0`. Degenerates to a single
    /// edge for two agents and to no edges for one.
    pub fn ring(n: usize) -> Self {
        let edges: Vec<_> = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1, 1.0)],
            _ => (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect(),
        };
        Topology::from_edges(n, &edges).expect("ring edges are well formed")
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) > 0.0
    }

    /// Neighbours of `i` with their edge weights, in index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights[i * self.n..(i + 1) * self.n].iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(j, w)| (j, *w))
    }

    /// Edges as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| if i == j { self.neighbors(i).map(|(_, w)| w).sum() } else { -self.weight(i, j) })
    }

    /// Breadth-first search from agent 0.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        if self.n == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.laplacian()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Number of Laplacian eigenvalues with `|λ| <= 1e-9 · max(1, ρ(L))`,
    /// which equals the number of connected components.
    pub fn zero_eigenvalue_multiplicity(&self) -> usize {
        let ev = self.laplacian_spectrum();
        let radius = ev.iter().fold(0.0_f64, |r, v| r.max(v.abs()));
        let tol = ZERO_EIGEN_RTOL * radius.max(1.0);
        ev.iter().filter(|v| v.abs() <= tol).count()
    }

    /// Second-smallest Laplacian eigenvalue (0 for `n < 2`).
    pub fn algebraic_connectivity(&self) -> f64 {
        self.laplacian_spectrum().get(1).copied().unwrap_or(0.0)
    }

    /// Subgraph keeping only the listed edges of `self` (by unordered pair).
    fn subgraph(&self, pairs: &[(usize, usize)]) -> Topology {
        let mut g = Topology::empty(self.n);
        for &(i, j) in pairs {
            let w = self.weight(i, j);
            g.weights[i * self.n + j] = w;
            g.weights[j * self.n + i] = w;
        }
        g
    }
}

/// One piece of a [`TopologySchedule`], active on `[start, next start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub topology: Topology,
}

/// Piecewise-constant `t -> Topology`. The last segment extends to `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySchedule {
    pub segments: Vec<Segment>,
    /// Minimum allowed gap between consecutive switch times.
    pub dwell_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Empty,
    FirstStartNotZero {
        start: f64,
    },
    /// `segments[index].start <= segments[index - 1].start`.
    Unordered {
        index: usize,
    },
    /// Gap between `segments[index - 1]` and `segments[index]` below `dwell_min`.
    DwellTooShort {
        index: usize,
        gap: f64,
        dwell_min: f64,
    },
    Disconnected {
        index: usize,
    },
    AgentCount {
        index: usize,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "schedule has no segments"),
            Violation::FirstStartNotZero { start } => write!(f, "first segment starts at {start}, not 0"),
            Violation::Unordered { index } => write!(f, "segment {index} does not start after segment {}", index - 1),
            Violation::DwellTooShort { index, gap, dwell_min } => {
                write!(f, "segment {index} starts {gap} s after the previous one (dwell {dwell_min} s)")
            }
            Violation::Disconnected { index } => write!(f, "segment {index} topology is disconnected"),
            Violation::AgentCount { index, expected, found } => {
                write!(f, "segment {index} has {found} agents, expected {expected}")
            }
        }
    }
}

impl TopologySchedule {
    /// Schedule with one topology forever.
    pub fn constant(topology: Topology) -> Self {
        TopologySchedule { segments: vec![Segment { start: 0.0, topology }], dwell_min: f64::INFINITY }
    }

    pub fn new(segments: Vec<Segment>, dwell_min: f64) -> Self {
        TopologySchedule { segments, dwell_min }
    }

    /// Segments every `dwell` seconds up to `horizon`, each a random connected
    /// subgraph of `base`: a uniform spanning tree (Wilson's algorithm) plus
    /// every other base edge independently with probability ½.
    pub fn random_connected_subgraphs(base: &Topology, dwell: f64, seed: u64, horizon: f64) -> Result<Self> {
        if !(dwell > 0.0) || !dwell.is_finite() {
            return Err(Error::Construction(format!("dwell must be positive, got {dwell}")));
        }
        if !base.is_connected() {
            return Err(Error::Construction("base graph for random subgraphs is disconnected".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let count = ((horizon / dwell).ceil() as usize).max(1);
        let segments = (0..count)
            .map(|k| Segment { start: k as f64 * dwell, topology: random_connected_subgraph(base, &mut rng) })
            .collect();
        Ok(TopologySchedule { segments, dwell_min: dwell })
    }

    pub fn agent_count(&self) -> usize {
        self.segments.first().map_or(0, |s| s.topology.agent_count())
    }

    /// Index of the segment containing `t` (right-continuous at switches).
    pub fn segment_index_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("schedule queried at t = {t}")));
        }
        if self.segments.is_empty() {
            return Err(Error::Domain("schedule has no segments".into()));
        }
        let k = self.segments.partition_point(|s| s.start <= t);
        Ok(k.saturating_sub(1))
    }

    pub fn active_at(&self, t: f64) -> Result<&Topology> {
        Ok(&self.segments[self.segment_index_at(t)?].topology)
    }

    /// Every breach of the schedule invariants; empty iff valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let Some(first) = self.segments.first() else {
            return vec![Violation::Empty];
        };
        if first.start != 0.0 {
            out.push(Violation::FirstStartNotZero { start: first.start });
        }
        let n = first.topology.agent_count();
        for (index, seg) in self.segments.iter().enumerate() {
            if seg.topology.agent_count() != n {
                out.push(Violation::AgentCount { index, expected: n, found: seg.topology.agent_count() });
            } else if !seg.topology.is_connected() {
                out.push(Violation::Disconnected { index });
            }
            if index == 0 {
                continue;
            }
            let gap = seg.start - self.segments[index - 1].start;
            if !(gap > 0.0) {
                out.push(Violation::Unordered { index });
            } else if gap < self.dwell_min {
                out.push(Violation::DwellTooShort { index, gap, dwell_min: self.dwell_min });
            }
        }
        out
    }
}

/// Free-function form of [`TopologySchedule::validate`].
pub fn validate_schedule(s: &TopologySchedule) -> Vec<Violation> {
    s.validate()
}

/// Anything the engine can ask for "the topology in force at time t".
pub trait TopologySource: Sync {
    fn topology_at(&self, t: f64) -> Result<&Topology>;
}

impl TopologySource for TopologySchedule {
    fn topology_at(&self, t: f64) -> Result<&Topology> {
        self.active_at(t)
    }
}

fn random_connected_subgraph(base: &Topology, rng: &mut impl Rng) -> Topology {
    let n = base.agent_count();
    let adjacency: Vec<Vec<usize>> = (0..n).map(|i| base.neighbors(i).map(|(j, _)| j).collect()).collect();
    let tree = wilson_spanning_tree(&adjacency, rng);
    let mut pairs: Vec<(usize, usize)> = tree.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    for (i, j, _) in base.edges() {
        if !pairs.contains(&(i, j)) && rng.random_bool(0.5) {
            pairs.push((i, j));
        }
    }
    base.subgraph(&pairs)
}

/// Uniform spanning tree by loop-erased random walks. `adjacency` must be connected.
fn wilson_spanning_tree(adjacency: &[Vec<usize>], rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let n = adjacency.len();
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut next = vec![usize::MAX; n];
    in_tree[rng.random_range(0..n)] = true;
    let mut edges = Vec::with_capacity(n - 1);
    for start in 0..n {
        let mut u = start;
        while !in_tree[u] {
            let nb = &adjacency[u];
            next[u] = nb[rng.random_range(0..nb.len())];
            u = next[u];
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            edges.push((u, next[u]));
            u = next[u];
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_segments() -> TopologySchedule {
        let a = Topology::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let b = Topology::from_edges(2, &[(0, 1, 2.0)]).unwrap();
        TopologySchedule::new(vec![Segment { start: 0.0, topology: a }, Segment { start: 1.0, topology: b }], 0.5)
    }

    #[test]
    fn single_edge_weights() {
        let g = Topology::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(g.weights, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn construction_errors() {
        assert!(Topology::from_edges(3, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(Topology::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(Topology::from_edges(3, &[(1, 1, 1.0)]).is_err());
        assert!(Topology::from_edges(3, &[(0, 1, 0.0)]).is_err());
        assert!(Topology::from_edges(3, &[(0, 1, -1.0)]).is_err());
        assert!(Topology::from_edges(3, &[(0, 3, 1.0)]).is_err());
    }

    #[test]
    fn tiny_rings() {
        assert!(Topology::ring(1).edges().is_empty());
        assert_eq!(Topology::ring(2).edges(), vec![(0, 1, 1.0)]);
        let s = TopologySchedule::random_connected_subgraphs(&Topology::ring(1), 0.5, 0, 1.0).unwrap();
        assert!(s.validate().is_empty());
    }

    #[test]
    fn ring_of_eight() {
        let g = Topology::ring(8);
        assert!(g.is_connected());
        assert_eq!(g.edges().len(), 8);
        let l = g.laplacian();
        for i in 0..8 {
            assert_eq!(l[(i, i)], 2.0);
        }
        assert_eq!(g.zero_eigenvalue_multiplicity(), 1);
        // cycle spectrum: 2 - 2cos(2πk/n)
        let expect = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / 8.0).cos();
        assert!((g.algebraic_connectivity() - expect).abs() < 1e-12);
    }

    #[test]
    fn connectivity_edge_cases() {
        assert!(!Topology::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap().is_connected());
        assert!(Topology::empty(1).is_connected());
        assert_eq!(Topology::empty(3).laplacian(), DMatrix::zeros(3, 3));
        assert_eq!(Topology::empty(3).zero_eigenvalue_multiplicity(), 3);
    }

    #[test]
    fn active_at_is_right_continuous() {
        let s = two_segments();
        assert_eq!(s.active_at(0.5).unwrap().weight(0, 1), 1.0);
        assert_eq!(s.active_at(1.0).unwrap().weight(0, 1), 2.0);
        assert_eq!(s.active_at(1e9).unwrap().weight(0, 1), 2.0);
        assert!(matches!(s.active_at(-1e-3), Err(Error::Domain(_))));
        let c = TopologySchedule::constant(Topology::ring(3));
        assert_eq!(c.segment_index_at(1e9).unwrap(), 0);
    }

    #[test]
    fn dwell_boundary_and_breaches() {
        let g = Topology::ring(4);
        let seg = |t: f64| Segment { start: t, topology: g.clone() };
        let ok = TopologySchedule::new(vec![seg(0.0), seg(0.5), seg(1.0)], 0.5);
        assert!(ok.validate().is_empty());

        let short = TopologySchedule::new(vec![seg(0.0), seg(0.5), seg(0.75)], 0.5);
        assert_eq!(short.validate(), vec![Violation::DwellTooShort { index: 2, gap: 0.25, dwell_min: 0.5 }]);

        let broken = Topology::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let disc = TopologySchedule::new(vec![seg(0.0), Segment { start: 0.5, topology: broken }], 0.5);
        assert_eq!(disc.validate(), vec![Violation::Disconnected { index: 1 }]);

        let unordered = TopologySchedule::new(vec![seg(0.0), seg(1.0), seg(1.0)], 0.5);
        assert_eq!(unordered.validate(), vec![Violation::Unordered { index: 2 }]);

        let late = TopologySchedule::new(vec![seg(0.1)], 0.5);
        assert_eq!(late.validate(), vec![Violation::FirstStartNotZero { start: 0.1 }]);
        assert_eq!(TopologySchedule::new(vec![], 0.5).validate(), vec![Violation::Empty]);
    }

    #[test]
    fn random_subgraphs_are_connected_subgraphs_of_base() {
        let base = Topology::ring(8);
        let s = TopologySchedule::random_connected_subgraphs(&base, 0.5, 11, 30.0).unwrap();
        assert_eq!(s.segments.len(), 60);
        assert!(s.validate().is_empty());
        for seg in &s.segments {
            let e = seg.topology.edges();
            assert!(e.len() >= 7);
            assert!(e.iter().all(|&(i, j, w)| base.weight(i, j) == w));
        }
        let again = TopologySchedule::random_connected_subgraphs(&base, 0.5, 11, 30.0).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn wilson_trees_on_ring_are_roughly_uniform() {
        // a spanning tree of an 8-cycle drops exactly one of 8 edges
        let adjacency: Vec<Vec<usize>> = (0..8).map(|i| vec![(i + 7) % 8, (i + 1) % 8]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 8];
        let trials = 8000;
        for _ in 0..trials {
            let tree = wilson_spanning_tree(&adjacency, &mut rng);
            assert_eq!(tree.len(), 7);
            let mut present = [false; 8];
            for (u, v) in tree {
                let k = if (u + 1) % 8 == v { u } else { v };
                present[k] = true;
            }
            let dropped = present.iter().position(|p| !p).unwrap();
            counts[dropped] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 150.0, "{counts:?}");
        }
    }
}
