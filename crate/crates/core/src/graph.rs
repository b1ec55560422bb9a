//! Graph bundles: an undirected simple graph with node features and labels,
//! plus the CSR adjacency the rest of the crate traverses.
//!
//! On disk a bundle is a directory:
//!
//! ```text
//! meta.json      {"name": .., "num_nodes": .., "num_features": .., "num_classes": ..}
//! edges.csv      header "src,dst", one undirected edge per row, 0-based ids
//! features.csv   no header, N rows of D comma-separated reals
//! labels.csv     no header, N rows, one class id in [0, K)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    name: String,
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

impl GraphBundle {
    /// Validates and canonicalizes. Edges are stored once as `(min, max)`,
    /// sorted, with duplicates and reversed duplicates merged. Self-loops are
    /// rejected.
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidBundle(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if features.nrows() != num_nodes {
            return Err(Error::InvalidBundle(format!(
                "feature matrix has {} rows, expected {num_nodes}",
                features.nrows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::InvalidBundle(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidBundle(format!(
                "label out of range: node {i} has label {y}, num_classes = {num_classes}"
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidBundle(format!(
                "non-finite feature {v} at ({i}, {j})"
            )));
        }
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidBundle(format!(
                    "edge ({a}, {b}) references a node outside 0..{num_nodes}"
                )));
            }
            if a == b {
                return Err(Error::InvalidBundle(format!("self-loop on node {a}")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            name: name.into(),
            num_nodes,
            edges: canon,
            features,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Same graph and labels with a replacement feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.num_nodes,
            self.edges.iter().copied(),
            features,
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Same graph and features with replacement labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.num_nodes,
            self.edges.iter().copied(),
            self.features.clone(),
            labels,
            self.num_classes,
        )
    }

    pub fn to_csr(&self) -> CsrAdjacency {
        CsrAdjacency::from_edges(self.num_nodes, &self.edges)
    }
}

/// Symmetric compressed-sparse-row adjacency with sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrAdjacency {
    offsets: Vec<usize>,
    indices: Vec<NodeId>,
    degree: Vec<usize>,
}

impl CsrAdjacency {
    /// Builds from undirected pairs. Each pair contributes both directions;
    /// duplicate pairs and self-loops are ignored.
    pub fn from_edges(num_nodes: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a == b {
                continue;
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut indices = Vec::with_capacity(2 * edges.len());
        let mut degree = Vec::with_capacity(num_nodes);
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            degree.push(row.len());
            indices.extend(row);
            offsets.push(indices.len());
        }
        Self { offsets, indices, degree }
    }

    pub fn num_nodes(&self) -> usize {
        self.degree.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.indices[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[NodeId] {
        &self.indices
    }
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_required(&meta_path)?)?;

    let edges_path = dir.join("edges.csv");
    let edges_text = read_required(&edges_path)?;
    let mut edges = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(edges_text.as_bytes());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err("edges.csv", row + 2, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err("edges.csv", row + 2, "expected two columns"));
        }
        let a = parse_field::<usize>(&rec[0], "edges.csv", row + 2)?;
        let b = parse_field::<usize>(&rec[1], "edges.csv", row + 2)?;
        if a == b {
            return Err(Error::InvalidBundle(format!(
                "self-loop on node {a} in edges.csv line {}",
                row + 2
            )));
        }
        edges.push((a, b));
    }

    let feat_path = dir.join("features.csv");
    let feat_text = read_required(&feat_path)?;
    let rows = headerless_rows(&feat_text, "features.csv")?;
    if rows.len() != meta.num_nodes {
        return Err(Error::InvalidBundle(format!(
            "features.csv has {} rows, meta.json says num_nodes = {}",
            rows.len(),
            meta.num_nodes
        )));
    }
    let mut data = Vec::with_capacity(meta.num_nodes * meta.num_features);
    for (line, rec) in rows.iter().enumerate() {
        if rec.len() != meta.num_features {
            return Err(parse_err(
                "features.csv",
                line + 1,
                format!("expected {} columns, found {}", meta.num_features, rec.len()),
            ));
        }
        for field in rec {
            data.push(parse_field::<f64>(field, "features.csv", line + 1)?);
        }
    }
    let features = Array2::from_shape_vec((meta.num_nodes, meta.num_features), data)
        .map_err(|e| Error::Dimension(e.to_string()))?;

    let label_path = dir.join("labels.csv");
    let label_text = read_required(&label_path)?;
    let label_rows = headerless_rows(&label_text, "labels.csv")?;
    if label_rows.len() != meta.num_nodes {
        return Err(Error::InvalidBundle(format!(
            "labels.csv has {} rows, meta.json says num_nodes = {}",
            label_rows.len(),
            meta.num_nodes
        )));
    }
    let labels = label_rows
        .iter()
        .enumerate()
        .map(|(line, rec)| {
            if rec.len() != 1 {
                return Err(parse_err("labels.csv", line + 1, "expected one column"));
            }
            parse_field::<usize>(&rec[0], "labels.csv", line + 1)
        })
        .collect::<Result<Vec<_>>>()?;

    GraphBundle::new(meta.name, meta.num_nodes, edges, features, labels, meta.num_classes)
}

pub fn save_bundle(bundle: &GraphBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if bundle.num_features() == 0 {
        return Err(Error::invalid("feature dimension must be positive"));
    }
    if bundle.name.contains(['/', '\\']) || bundle.name == ".." {
        return Err(Error::invalid(format!(
            "bundle name {:?} contains a path separator",
            bundle.name
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = Meta {
        name: bundle.name.clone(),
        num_nodes: bundle.num_nodes,
        num_features: bundle.num_features(),
        num_classes: bundle.num_classes,
    };
    write_file(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;

    let mut edges = String::from("src,dst\n");
    for &(a, b) in &bundle.edges {
        edges.push_str(&format!("{a},{b}\n"));
    }
    write_file(&dir.join("edges.csv"), edges.as_bytes())?;
    write_file(&dir.join("features.csv"), matrix_csv(&bundle.features).as_bytes())?;

    let mut labels = String::new();
    for y in &bundle.labels {
        labels.push_str(&format!("{y}\n"));
    }
    write_file(&dir.join("labels.csv"), labels.as_bytes())
}

/// Headerless CSV of a matrix. `f64` Display is shortest-round-trip, so a
/// parse of the output is bit-exact.
pub(crate) fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn read_matrix_csv(path: &Path, cols: usize) -> Result<Array2<f64>> {
    let text = read_required(path)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("matrix");
    let rows = headerless_rows(&text, name)?;
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, rec) in rows.iter().enumerate() {
        if rec.len() != cols {
            return Err(parse_err(name, line + 1, format!("expected {cols} columns")));
        }
        for field in rec {
            data.push(parse_field::<f64>(field, name, line + 1)?);
        }
    }
    Array2::from_shape_vec((rows.len(), cols), data).map_err(|e| Error::Dimension(e.to_string()))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_required(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn headerless_rows(text: &str, file: &str) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            rec.map(|r| r.iter().map(str::to_owned).collect())
                .map_err(|e| parse_err(file, i + 1, e.to_string()))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(field: &str, file: &str, line: usize) -> Result<T> {
    field
        .parse::<T>()
        .map_err(|_| parse_err(file, line, format!("cannot parse {field:?}")))
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { file: file.to_owned(), line, msg: msg.into() }
}
