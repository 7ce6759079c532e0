#![allow(dead_code)]

use adaptopt::graph::Topology;
use adaptopt::objective::{ObjectiveSpec, Term};
use rand::Rng;

/// Random graph: each pair present with probability `density`, weights in [0.1, 3).
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> Topology {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    Topology::from_edges(n, &edges).unwrap()
}

/// Random connected graph: a random spanning path plus random extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize) -> Topology {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut pairs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    for i in 0..n {
        for j in i + 1..n {
            if !pairs.contains(&(i, j)) && rng.random_bool(0.3) {
                pairs.push((i, j));
            }
        }
    }
    let edges: Vec<_> = pairs.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
    Topology::from_edges(n, &edges).unwrap()
}

/// Number of connected components by union-find (independent of the BFS
/// and of the spectrum).
pub fn component_count(g: &Topology) -> usize {
    let n = g.agent_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for (i, j, _) in g.edges() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Random objective on R^m with 1-3 terms per coordinate, powers 2/4/6.
pub fn random_objective(rng: &mut impl Rng, m: usize) -> ObjectiveSpec {
    let mut terms = Vec::new();
    for k in 0..m {
        for _ in 0..rng.random_range(1..=3) {
            let power = [2, 4, 6][rng.random_range(0..3)];
            terms.push(Term::new(rng.random_range(0.05..3.0), k, rng.random_range(-3.0..3.0), power));
        }
    }
    ObjectiveSpec::new(m, terms).unwrap()
}

pub fn random_point(rng: &mut impl Rng, m: usize, half: f64) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-half..half)).collect()
}
