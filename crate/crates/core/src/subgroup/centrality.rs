use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{multi_source_bfs, Scores};
use crate::error::{Error, Result};
use crate::graph::CsrAdjacency;

const PAGERANK_DAMPING: f64 = 0.85;
const PAGERANK_TOL: f64 = 1e-8;
const PAGERANK_MAX_ITER: usize = 10_000;

/// Sources per parallel work unit. Partial sums are reduced in chunk order so
/// the result does not depend on the worker count.
const SOURCE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityKind {
    Degree,
    /// Harmonic closeness `sum_{u != v} 1 / dist(v, u)`.
    Closeness,
    /// Exact Brandes, unnormalized, each unordered pair counted once.
    Betweenness,
    Pagerank,
}

pub fn centrality_scores(adj: &CsrAdjacency, kind: CentralityKind) -> Result<Scores> {
    let values = match kind {
        CentralityKind::Degree => adj.degree().iter().map(|&d| d as f64).collect(),
        CentralityKind::Closeness => harmonic_closeness(adj),
        CentralityKind::Betweenness => betweenness(adj),
        CentralityKind::Pagerank => pagerank(adj)?,
    };
    Ok(values.into_iter().enumerate().collect())
}

fn harmonic_closeness(adj: &CsrAdjacency) -> Vec<f64> {
    (0..adj.num_nodes())
        .into_par_iter()
        .map(|v| {
            multi_source_bfs(adj, &[v])
                .into_iter()
                .flatten()
                .filter(|&d| d > 0)
                .map(|d| 1.0 / d as f64)
                .sum()
        })
        .collect()
}

fn betweenness(adj: &CsrAdjacency) -> Vec<f64> {
    let n = adj.num_nodes();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut state = BrandesState::new(n);
            for &s in chunk {
                state.accumulate(adj, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    // Undirected: every pair was visited from both endpoints.
    total.iter_mut().for_each(|t| *t /= 2.0);
    total
}

struct BrandesState {
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: VecDeque<usize>,
}

impl BrandesState {
    fn new(n: usize) -> Self {
        Self {
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            queue: VecDeque::new(),
        }
    }

    fn accumulate(&mut self, adj: &CsrAdjacency, s: usize, acc: &mut [f64]) {
        self.sigma.fill(0.0);
        self.dist.fill(-1);
        self.delta.fill(0.0);
        self.order.clear();
        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.order.push(v);
            for &w in adj.neighbors(v) {
                if self.dist[w] < 0 {
                    self.dist[w] = self.dist[v] + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == self.dist[v] + 1 {
                    self.sigma[w] += self.sigma[v];
                }
            }
        }
        // Predecessors of w are the neighbors one level closer to s.
        for &w in self.order.iter().rev() {
            for &v in adj.neighbors(w) {
                if self.dist[v] == self.dist[w] - 1 {
                    self.delta[v] += self.sigma[v] / self.sigma[w] * (1.0 + self.delta[w]);
                }
            }
            if w != s {
                acc[w] += self.delta[w];
            }
        }
    }
}

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
fn pagerank(adj: &CsrAdjacency) -> Result<Vec<f64>> {
    let n = adj.num_nodes();
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITER {
        let dangling: f64 = (0..n).filter(|&i| adj.degree()[i] == 0).map(|i| rank[i]).sum();
        let base = (1.0 - PAGERANK_DAMPING) / nf + PAGERANK_DAMPING * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = adj
                .neighbors(v)
                .iter()
                .map(|&u| rank[u] / adj.degree()[u] as f64)
                .sum();
            *slot = base + PAGERANK_DAMPING * inflow;
        }
        let diff: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if diff < PAGERANK_TOL {
            return Ok(rank);
        }
    }
    Err(Error::NoConvergence(format!(
        "pagerank did not reach L1 tolerance {PAGERANK_TOL} in {PAGERANK_MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_pagerank_is_uniform() {
        let adj = CsrAdjacency::from_edges(2, &[(0, 1)]);
        let pr = centrality_scores(&adj, CentralityKind::Pagerank).unwrap();
        assert!((pr[&0] - 0.5).abs() < 1e-12 && (pr[&1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn path_betweenness() {
        let adj = CsrAdjacency::from_edges(3, &[(0, 1), (1, 2)]);
        let bc = centrality_scores(&adj, CentralityKind::Betweenness).unwrap();
        assert_eq!((bc[&0], bc[&1], bc[&2]), (0.0, 1.0, 0.0));
    }

    #[test]
    fn star_degree() {
        let adj = CsrAdjacency::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let d = centrality_scores(&adj, CentralityKind::Degree).unwrap();
        assert_eq!(d[&0], 4.0);
        assert!((1..5).all(|i| d[&i] == 1.0));
    }

    #[test]
    fn harmonic_closeness_handles_components() {
        let adj = CsrAdjacency::from_edges(5, &[(0, 1), (1, 2), (3, 4)]);
        let c = centrality_scores(&adj, CentralityKind::Closeness).unwrap();
        assert!((c[&0] - 1.5).abs() < 1e-15);
        assert!((c[&1] - 2.0).abs() < 1e-15);
        assert!((c[&3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pagerank_sums_to_one_with_dangling_nodes() {
        let adj = CsrAdjacency::from_edges(5, &[(0, 1), (1, 2)]);
        let pr = centrality_scores(&adj, CentralityKind::Pagerank).unwrap();
        let total: f64 = pr.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((pr[&3] - pr[&4]).abs() < 1e-15);
    }
}
