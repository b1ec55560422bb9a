//! Feature aggregation `Z = g(X, G)`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::graph::{CsrAdjacency, GraphBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationSpec {
    /// `Z = X`; the plain MLP case.
    Identity,
    /// Mean over the closed neighborhood: `(X_i + sum_{j in N(i)} X_j) / (|N(i)| + 1)`.
    OneStepMean,
    /// `Z = P P X` with `P = (D + I)^{-1} (A + I)`.
    TwoStepNorm,
}

#[derive(Debug, Clone)]
pub struct AggregatedFeatures {
    z: Array2<f64>,
    spec: AggregationSpec,
    row_norms: Array1<f64>,
}

impl AggregatedFeatures {
    pub fn new(z: Array2<f64>, spec: AggregationSpec) -> Self {
        let row_norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        Self { z, spec, row_norms }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn spec(&self) -> AggregationSpec {
        self.spec
    }

    pub fn row_norms(&self) -> &Array1<f64> {
        &self.row_norms
    }

    pub fn num_rows(&self) -> usize {
        self.z.nrows()
    }

    /// Copies the requested rows into a new matrix, in order.
    pub fn select_rows(&self, ids: &[usize]) -> Array2<f64> {
        self.z.select(Axis(0), ids)
    }
}

pub fn aggregate(bundle: &GraphBundle, adj: &CsrAdjacency, spec: AggregationSpec) -> AggregatedFeatures {
    aggregate_matrix(bundle.features(), adj, spec)
}

pub fn aggregate_matrix(x: &Array2<f64>, adj: &CsrAdjacency, spec: AggregationSpec) -> AggregatedFeatures {
    assert_eq!(x.nrows(), adj.num_nodes(), "feature rows must match adjacency size");
    let z = match spec {
        AggregationSpec::Identity => x.clone(),
        AggregationSpec::OneStepMean => propagate(adj, x),
        AggregationSpec::TwoStepNorm => propagate(adj, &propagate(adj, x)),
    };
    AggregatedFeatures::new(z, spec)
}

/// One sparse pass of `(D + I)^{-1} (A + I)`; this is also the closed-neighborhood mean.
fn propagate(adj: &CsrAdjacency, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&x.row(i));
        let nbrs = adj.neighbors(i);
        for &j in nbrs {
            row += &x.row(j);
        }
        row /= (nbrs.len() + 1) as f64;
    }
    out
}

/// Per-row sums of the one-step operator. Each entry should be 1.
pub fn row_operator_checksum(adj: &CsrAdjacency) -> Vec<f64> {
    (0..adj.num_nodes())
        .map(|i| {
            let w = 1.0 / (adj.degree()[i] + 1) as f64;
            // self term plus one weight per neighbor
            w + adj.neighbors(i).iter().map(|_| w).sum::<f64>()
        })
        .collect()
}
