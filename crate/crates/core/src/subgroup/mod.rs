//! Test-node scoring and subgroup construction: distance to the training
//! set (aggregated-feature and geodesic), centralities, equal-size splits,
//! and near sets.

mod centrality;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatedFeatures;
use crate::error::{Error, Result};
use crate::graph::{CsrAdjacency, NodeId};

pub use centrality::{centrality_scores, CentralityKind};

/// Score per node. Ordered by node id, which keeps every downstream fold deterministic.
pub type Scores = BTreeMap<NodeId, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    AggDistance,
    Geodesic,
    Degree,
    Closeness,
    Betweenness,
    Pagerank,
}

impl SplitKind {
    /// Distances put the closest nodes in group 1; centralities put the most
    /// central nodes in group 1.
    pub fn order(self) -> SortOrder {
        match self {
            SplitKind::AggDistance | SplitKind::Geodesic => SortOrder::Ascending,
            _ => SortOrder::Descending,
        }
    }

    pub fn centrality(self) -> Option<CentralityKind> {
        match self {
            SplitKind::Degree => Some(CentralityKind::Degree),
            SplitKind::Closeness => Some(CentralityKind::Closeness),
            SplitKind::Betweenness => Some(CentralityKind::Betweenness),
            SplitKind::Pagerank => Some(CentralityKind::Pagerank),
            SplitKind::AggDistance | SplitKind::Geodesic => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupPartition {
    pub train_set: Vec<NodeId>,
    /// Groups `V_1..V_M`; index 0 holds group 1.
    pub groups: Vec<Vec<NodeId>>,
    pub scores: Scores,
    pub split_kind: SplitKind,
}

impl SubgroupPartition {
    pub fn new(train_set: Vec<NodeId>, scores: Scores, split_kind: SplitKind, m: usize) -> Result<Self> {
        let groups = split_into_groups(&scores, m, split_kind.order())?;
        Ok(Self { train_set, groups, scores, split_kind })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearSetStructure {
    pub epsilon_m: f64,
    /// Train node -> test nodes assigned to it. Every train node is present.
    pub near_sets: BTreeMap<NodeId, Vec<NodeId>>,
    pub s_m: Option<usize>,
    pub assumption2_holds: bool,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest train node and its distance; ties go to the smaller id.
fn nearest_train(z: &AggregatedFeatures, train: &[NodeId], j: NodeId) -> (NodeId, f64) {
    let m = z.matrix();
    let mut best = (NodeId::MAX, f64::INFINITY);
    for &i in train {
        let d = sq_dist(m.row(i), m.row(j));
        if d < best.1 || (d == best.1 && i < best.0) {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// `d_j = min_{i in V_0} ||Z_i - Z_j||_2` for each target.
pub fn agg_distance_scores(z: &AggregatedFeatures, train: &[NodeId], targets: &[NodeId]) -> Result<Scores> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    Ok(targets.iter().map(|&j| (j, nearest_train(z, train, j).1)).collect())
}

/// Hop distance to the nearest training node via multi-source BFS.
/// Unreachable targets score `f64::INFINITY`.
pub fn geodesic_scores(adj: &CsrAdjacency, train: &[NodeId], targets: &[NodeId]) -> Scores {
    let dist = multi_source_bfs(adj, train);
    targets
        .iter()
        .map(|&j| (j, dist[j].map_or(f64::INFINITY, |d| d as f64)))
        .collect()
}

pub(crate) fn multi_source_bfs(adj: &CsrAdjacency, sources: &[NodeId]) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.num_nodes()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in adj.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Sorts nodes by `(score, id)` and cuts them into `m` contiguous chunks whose
/// sizes differ by at most one, with the extras going to the earliest chunks.
/// Descending order reverses the score comparison but still breaks ties by
/// ascending id.
pub fn split_into_groups(scores: &Scores, m: usize, order: SortOrder) -> Result<Vec<Vec<NodeId>>> {
    if m == 0 {
        return Err(Error::invalid("number of groups must be at least 1"));
    }
    if m > scores.len() {
        return Err(Error::invalid(format!(
            "{m} groups requested but only {} scored nodes",
            scores.len()
        )));
    }
    // -0.0 and 0.0 are the same score, so they must tie-break by id.
    let mut nodes: Vec<(NodeId, f64)> = scores
        .iter()
        .map(|(&k, &v)| (k, if v == 0.0 { 0.0 } else { v }))
        .collect();
    nodes.sort_by(|a, b| {
        let by_score = match order {
            SortOrder::Ascending => a.1.total_cmp(&b.1),
            SortOrder::Descending => b.1.total_cmp(&a.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });
    let base = nodes.len() / m;
    let extra = nodes.len() % m;
    let mut groups = Vec::with_capacity(m);
    let mut it = nodes.into_iter().map(|(id, _)| id);
    for g in 0..m {
        let size = base + usize::from(g < extra);
        groups.push(it.by_ref().take(size).collect());
    }
    Ok(groups)
}

/// Distance to the training set and the nearest-assignment near sets.
///
/// Each test node goes to exactly one train node (its nearest, ties to the
/// smaller id), which is always within `epsilon_m`. Assumption 2 holds iff
/// every train node receives the same non-zero number of test nodes.
pub fn build_near_sets(z: &AggregatedFeatures, train: &[NodeId], test: &[NodeId]) -> Result<NearSetStructure> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("near sets need non-empty train and test sets"));
    }
    let mut near_sets: BTreeMap<NodeId, Vec<NodeId>> = train.iter().map(|&i| (i, Vec::new())).collect();
    let mut epsilon_m = 0.0f64;
    for &j in test {
        let (i, d) = nearest_train(z, train, j);
        epsilon_m = epsilon_m.max(d);
        near_sets.get_mut(&i).unwrap().push(j);
    }
    let first = near_sets.values().next().map_or(0, Vec::len);
    let holds = first > 0 && near_sets.values().all(|s| s.len() == first);
    Ok(NearSetStructure {
        epsilon_m,
        near_sets,
        s_m: holds.then_some(first),
        assumption2_holds: holds,
    })
}
