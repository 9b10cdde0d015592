//! Graphs as seen by the network: the modified adjacency Λ, the input
//! feature matrix and an optional label.
//!
//! Λ is stored in aggregation orientation, so the forward pass computes
//! `Z = Λ·H` and `Λ[[to, from]]` is the weight with which node `from`
//! feeds node `to`. For undirected graphs the distinction disappears.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Graph-level class or per-node binary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Nodes(Vec<u8>),
}

/// How raw edges become Λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyOptions {
    /// Keep edge direction. When false every edge is mirrored.
    pub directed: bool,
    pub self_loops: bool,
    /// Symmetric degree normalisation `D^-1/2 Λ D^-1/2` (row sums of Λ).
    pub normalize: bool,
}

impl Default for AdjacencyOptions {
    fn default() -> Self {
        Self { directed: false, self_loops: true, normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Array2<f64>,
    features: Array2<f64>,
    label: Option<Label>,
}

impl Graph {
    /// Builds a graph from an already modified adjacency Λ.
    pub fn new(adjacency: Array2<f64>, features: Array2<f64>, label: Option<Label>) -> Result<Self> {
        let (rows, cols) = adjacency.dim();
        if rows != cols {
            return Err(Error::invalid("graph", format!("adjacency is {rows}x{cols}, not square")));
        }
        if features.nrows() != rows {
            return Err(Error::invalid(
                "graph",
                format!("features have {} rows for {rows} nodes", features.nrows()),
            ));
        }
        if let Some(bad) = adjacency.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("graph", format!("adjacency entry {bad} is not a finite nonnegative value")));
        }
        if let Some(Label::Nodes(bits)) = &label {
            if bits.len() != rows {
                return Err(Error::invalid("graph", format!("{} node labels for {rows} nodes", bits.len())));
            }
        }
        Ok(Self { adjacency, features, label })
    }

    /// Builds Λ from a list of edges `(from, to)`.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        label: Option<Label>,
        options: AdjacencyOptions,
    ) -> Result<Self> {
        let mut raw = Array2::zeros((num_nodes, num_nodes));
        for &(from, to) in edges {
            if from >= num_nodes || to >= num_nodes {
                return Err(Error::invalid("graph", format!("edge ({from}, {to}) out of range for {num_nodes} nodes")));
            }
            raw[[from, to]] = 1.0;
        }
        Self::from_dense_edges(raw, features, label, options)
    }

    /// Builds Λ from a dense edge matrix where `raw[[from, to]]` is the
    /// weight of edge `from -> to`.
    pub fn from_dense_edges(
        raw: Array2<f64>,
        features: Array2<f64>,
        label: Option<Label>,
        options: AdjacencyOptions,
    ) -> Result<Self> {
        let (rows, cols) = raw.dim();
        if rows != cols {
            return Err(Error::invalid("graph", format!("dense adjacency is {rows}x{cols}, not square")));
        }
        let mut lambda = raw.t().to_owned();
        if !options.directed {
            for i in 0..rows {
                for j in 0..i {
                    let w = lambda[[i, j]].max(lambda[[j, i]]);
                    lambda[[i, j]] = w;
                    lambda[[j, i]] = w;
                }
            }
        }
        if options.self_loops {
            for i in 0..rows {
                lambda[[i, i]] += 1.0;
            }
        }
        if options.normalize {
            let scale: Vec<f64> = lambda
                .rows()
                .into_iter()
                .map(|r| {
                    let d: f64 = r.sum();
                    if d > 0.0 {
                        d.sqrt().recip()
                    } else {
                        0.0
                    }
                })
                .collect();
            for ((i, j), v) in lambda.indexed_iter_mut() {
                *v *= scale[i] * scale[j];
            }
        }
        Self::new(lambda, features, label)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Λ in aggregation orientation (`Z = Λ·H`).
    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Weight with which `from` feeds `to` in one aggregation step.
    #[inline]
    pub fn flow(&self, from: usize, to: usize) -> f64 {
        self.adjacency[[to, from]]
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn label(&self) -> Option<&Label> {
        self.label.as_ref()
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes() {
            return Err(Error::invalid("graph", "replacement features have the wrong row count"));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    /// Directed edges `(from, to)` with nonzero Λ weight, excluding self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from != to && self.flow(from, to) != 0.0 {
                    out.push((from, to));
                }
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: GraphFile = io::read_json(path)?;
        file.into_graph()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &GraphFile::from(self))
    }
}

/// On-disk graph format. Exactly one of `edges` / `dense` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub num_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<Vec<f64>>>,
    pub features: Vec<Vec<f64>>,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub directed: bool,
    #[serde(default = "default_true")]
    pub self_loops: bool,
    #[serde(default)]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

impl GraphFile {
    pub fn into_graph(self) -> Result<Graph> {
        let features = matrix_from_rows(&self.features, "features")?;
        let features = if self.features.is_empty() { Array2::zeros((self.num_nodes, 0)) } else { features };
        let options = AdjacencyOptions {
            directed: self.directed,
            self_loops: self.self_loops,
            normalize: self.normalize,
        };
        match (self.edges, self.dense) {
            (Some(edges), None) => {
                let pairs: Vec<_> = edges.iter().map(|e| (e[0], e[1])).collect();
                Graph::from_edges(self.num_nodes, &pairs, features, self.label, options)
            }
            (None, Some(dense)) => {
                let raw = matrix_from_rows(&dense, "dense")?;
                if raw.nrows() != self.num_nodes {
                    return Err(Error::invalid("graph", "dense adjacency size differs from num_nodes"));
                }
                Graph::from_dense_edges(raw, features, self.label, options)
            }
            _ => Err(Error::invalid("graph", "exactly one of `edges` or `dense` must be given")),
        }
    }
}

impl From<&Graph> for GraphFile {
    fn from(g: &Graph) -> Self {
        // Written as the raw directed edge matrix that reproduces Λ exactly.
        let dense = g.adjacency.t().rows().into_iter().map(|r| r.to_vec()).collect();
        GraphFile {
            num_nodes: g.num_nodes(),
            edges: None,
            dense: Some(dense),
            features: g.features.rows().into_iter().map(|r| r.to_vec()).collect(),
            label: g.label.clone(),
            directed: true,
            self_loops: false,
            normalize: false,
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::invalid(what, format!("row {i} has {} entries, expected {ncols}", r.len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), ncols), flat).expect("row lengths checked"))
}

pub(crate) fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}
