//! Independent dense reference implementations shared by the integration
//! tests and the acceptance suite.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi edge list on `n` nodes, each pair kept with probability `p`.
pub fn random_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn random_graph(seed: u64, max_nodes: usize) -> (usize, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_nodes);
    let p = rng.random_range(0.0..0.4);
    let edges = random_edges(n, p, &mut rng);
    (n, edges)
}

pub fn dense_adjacency(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    a
}

/// `P = (D + I)^{-1} (A + I)` as a dense matrix.
pub fn dense_operator(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut m = dense_adjacency(n, edges) + Array2::<f64>::eye(n);
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// All-pairs hop distances by Floyd-Warshall; `None` when unreachable.
pub fn floyd(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<u32>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(i, j) in edges {
        d[i][j] = Some(1);
        d[j][i] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Number of shortest paths between every pair, counted by extending paths
/// one hop at a time in order of length.
pub fn path_counts(n: usize, edges: &[(usize, usize)], dist: &[Vec<Option<u32>>]) -> Vec<Vec<u128>> {
    let adj = {
        let mut a = vec![Vec::new(); n];
        for &(i, j) in edges {
            a[i].push(j);
            a[j].push(i);
        }
        a
    };
    let mut count = vec![vec![0u128; n]; n];
    for s in 0..n {
        count[s][s] = 1;
        let mut by_len: Vec<usize> = (0..n).filter(|&t| dist[s][t].is_some()).collect();
        by_len.sort_by_key(|&t| dist[s][t]);
        for &t in &by_len {
            if t == s {
                continue;
            }
            let dt = dist[s][t].unwrap();
            count[s][t] = adj[t]
                .iter()
                .filter(|&&u| dist[s][u] == Some(dt - 1))
                .map(|&u| count[s][u])
                .sum();
        }
    }
    count
}

/// Betweenness by summing over every unordered pair `{s, t}` the share of
/// shortest `s`-`t` paths that pass through `v`.
pub fn betweenness_enumeration(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let dist = floyd(n, edges);
    let count = path_counts(n, edges, &dist);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let Some(dst) = dist[s][t] else { continue };
            for (v, slot) in bc.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                if let (Some(a), Some(b)) = (dist[s][v], dist[v][t]) {
                    if a + b == dst {
                        *slot += (count[s][v] * count[v][t]) as f64 / count[s][t] as f64;
                    }
                }
            }
        }
    }
    bc
}

pub fn harmonic_closeness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let dist = floyd(n, edges);
    (0..n)
        .map(|v| {
            (0..n)
                .filter(|&u| u != v)
                .filter_map(|u| dist[v][u])
                .map(|d| 1.0 / d as f64)
                .sum()
        })
        .collect()
}

pub fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let a = dense_adjacency(n, edges);
    a.rows().into_iter().map(|r| r.sum()).collect()
}

/// Dense Google-matrix power iteration, stopped on the same L1 rule as the
/// library (change below 1e-8).
pub fn pagerank_dense(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let g = google_matrix(n, edges);
    let mut r = vec![1.0 / n as f64; n];
    loop {
        let next: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g[[i, j]] * r[j]).sum()).collect();
        let diff: f64 = r.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if diff < 1e-8 {
            return r;
        }
    }
}

/// Column-stochastic `G` with `r = G r` at the PageRank fixed point.
fn google_matrix(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let a = dense_adjacency(n, edges);
    let nf = n as f64;
    let mut g = Array2::from_elem((n, n), 0.15 / nf);
    for j in 0..n {
        let deg: f64 = a.column(j).sum();
        for i in 0..n {
            g[[i, j]] += if deg == 0.0 { 0.85 / nf } else { 0.85 * a[[i, j]] / deg };
        }
    }
    g
}

/// Exact PageRank by solving `(I - G) r = 0`, `sum r = 1` with Gaussian elimination.
pub fn pagerank_exact(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let g = google_matrix(n, edges);
    let mut m = Array2::<f64>::eye(n) - &g;
    let mut rhs = vec![0.0; n];
    m.row_mut(n - 1).fill(1.0);
    rhs[n - 1] = 1.0;
    solve(m, rhs)
}

fn solve(mut m: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[[x, col]].abs().total_cmp(&m[[y, col]].abs())).unwrap();
        if piv != col {
            for k in 0..n {
                m.swap([col, k], [piv, k]);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[[r, col]] / m[[col, col]];
            for k in col..n {
                m[[r, k]] -= f * m[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / m[[r, r]];
    }
    x
}

/// Largest singular value via cyclic Jacobi on `W^T W`.
pub fn spectral_norm_jacobi(w: &Array2<f64>) -> f64 {
    let mut a = w.t().dot(w);
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).fold(0.0, f64::max).max(0.0).sqrt()
}

/// Empirical margin loss written directly from its definition.
pub fn margin_loss_oracle(logits: &Array2<f64>, labels: &[usize], gamma: f64) -> f64 {
    let mut bad = 0usize;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let violated = (0..row.len()).filter(|&j| j != y).any(|j| row[y] <= gamma + row[j]);
        if violated {
            bad += 1;
        }
    }
    bad as f64 / labels.len() as f64
}

pub fn theorem1_oracle(loss: f64, kl: f64, lambda: f64, n0: usize, delta: f64, d: f64) -> f64 {
    let ln_inv_delta = -delta.ln();
    let sub = lambda.powi(2) / (4.0 * n0 as f64);
    loss + kl / lambda + ln_inv_delta / lambda + sub / lambda + d / lambda
}

pub fn theorem2_oracle(loss: f64, kl: f64, lambda: f64, n0: usize, delta: f64, d: f64) -> f64 {
    let ln_inv_delta = -delta.ln();
    let sub = lambda.powi(2) / (4.0 * n0 as f64);
    loss + 2.0 * kl / lambda + 2.0 / lambda + ln_inv_delta / lambda + sub / lambda + d / lambda
}
