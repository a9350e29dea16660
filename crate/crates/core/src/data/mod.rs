//! Graph datasets: the uniform representation, parsers, and splits.

pub mod cora;
pub mod smiles;
pub mod splits;
pub mod synth;
pub mod tu;

use std::collections::BTreeSet;

use thiserror::Error;

pub use cora::{load_cora, parse_cora};
pub use smiles::{load_bbbp, parse_smiles};
pub use splits::{make_splits, LinkNegatives, Split};
pub use tu::load_tu;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("smiles parse error at position {pos}: {msg}")]
    Smiles { pos: usize, msg: String },
    #[error("missing mandatory file: {0}")]
    MissingFile(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// Task family a dataset is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    GraphClassification,
    LinkPrediction,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::NodeClassification => "node",
            Task::GraphClassification => "graph",
            Task::LinkPrediction => "link",
        }
    }
}

/// Undirected graph with dense node features. Edges are stored once with
/// `src < dst`; symmetric expansion happens at adjacency construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(u32, u32)>,
    pub node_features: Vec<f32>,
    pub feature_dim: usize,
    pub node_labels: Option<Vec<u32>>,
    pub graph_label: Option<u32>,
}

impl Graph {
    /// Validates invariants: endpoints in range, no self-loops, feature rows
    /// matching the node count. Edges are canonicalized and deduplicated.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(u32, u32)>,
        node_features: Vec<f32>,
        feature_dim: usize,
    ) -> Result<Self, DataError> {
        if node_features.len() != num_nodes * feature_dim {
            return Err(DataError::InvalidGraph(format!(
                "feature matrix has {} values, expected {}x{}",
                node_features.len(),
                num_nodes,
                feature_dim
            )));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in &edges {
            if a as usize >= num_nodes || b as usize >= num_nodes {
                return Err(DataError::InvalidGraph(format!(
                    "edge ({a},{b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                return Err(DataError::InvalidGraph(format!("self-loop on node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
            node_features,
            feature_dim,
            node_labels: None,
            graph_label: None,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_row(&self, node: usize) -> &[f32] {
        &self.node_features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    /// Degree of every node, counting each undirected edge once per endpoint.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.num_nodes];
        for &(a, b) in &self.edges {
            d[a as usize] += 1;
            d[b as usize] += 1;
        }
        d
    }

    /// Both directions of every stored edge.
    pub fn symmetric_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)].into_iter())
    }

    /// Line-oriented text dump: `N`, `E`, `F` rows plus optional `L`/`G`
    /// label lines. `parse_dump` inverts it exactly.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("N {}\n", self.num_nodes));
        out.push_str(&format!("D {}\n", self.feature_dim));
        for &(a, b) in &self.edges {
            out.push_str(&format!("E {a} {b}\n"));
        }
        for node in 0..self.num_nodes {
            out.push('F');
            for v in self.feature_row(node) {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        if let Some(labels) = &self.node_labels {
            for l in labels {
                out.push_str(&format!("L {l}\n"));
            }
        }
        if let Some(g) = self.graph_label {
            out.push_str(&format!("G {g}\n"));
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self, DataError> {
        let mut num_nodes = None;
        let mut feature_dim = None;
        let mut edges = Vec::new();
        let mut features = Vec::new();
        let mut node_labels = Vec::new();
        let mut graph_label = None;
        let err = |line: usize, msg: String| DataError::Parse {
            file: "<dump>".into(),
            line,
            msg,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut parts = raw.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            match tag {
                "N" => {
                    num_nodes = Some(
                        parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(line_no, "bad N line".into()))?,
                    )
                }
                "D" => {
                    feature_dim = Some(
                        parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(line_no, "bad D line".into()))?,
                    )
                }
                "E" => {
                    let a = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(line_no, "bad edge".into()))?;
                    let b = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(line_no, "bad edge".into()))?;
                    edges.push((a, b));
                }
                "F" => {
                    for p in parts {
                        features.push(
                            p.parse::<f32>()
                                .map_err(|e| err(line_no, format!("bad feature: {e}")))?,
                        );
                    }
                }
                "L" => node_labels.push(
                    parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(line_no, "bad label".into()))?,
                ),
                "G" => {
                    graph_label = Some(
                        parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(line_no, "bad graph label".into()))?,
                    )
                }
                other => return Err(err(line_no, format!("unknown tag `{other}`"))),
            }
        }
        let n = num_nodes.ok_or_else(|| err(0, "missing N line".into()))?;
        let d = feature_dim.ok_or_else(|| err(0, "missing D line".into()))?;
        let mut g = Graph::new(n, edges, features, d)?;
        if !node_labels.is_empty() {
            if node_labels.len() != n {
                return Err(DataError::InvalidGraph(format!(
                    "{} node labels for {} nodes",
                    node_labels.len(),
                    n
                )));
            }
            g.node_labels = Some(node_labels);
        }
        g.graph_label = graph_label;
        Ok(g)
    }
}

/// A named collection of graphs for one task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), DataError> {
        match self.task {
            Task::NodeClassification | Task::LinkPrediction => {
                if self.graphs.len() != 1 {
                    return Err(DataError::InvalidGraph(format!(
                        "{} task requires exactly one graph, got {}",
                        self.task.as_str(),
                        self.graphs.len()
                    )));
                }
            }
            Task::GraphClassification => {}
        }
        for g in &self.graphs {
            // node labels are task targets only for node classification;
            // elsewhere they are raw annotations (e.g. TU atom types)
            if self.task == Task::NodeClassification {
                if let Some(labels) = &g.node_labels {
                    if labels.iter().any(|&l| l as usize >= self.num_classes) {
                        return Err(DataError::InvalidGraph("node label out of range".into()));
                    }
                }
            }
            if let Some(l) = g.graph_label {
                if l as usize >= self.num_classes {
                    return Err(DataError::InvalidGraph("graph label out of range".into()));
                }
            }
            if g.feature_dim != self.feature_dim {
                return Err(DataError::InvalidGraph("inconsistent feature_dim".into()));
            }
        }
        Ok(())
    }

    pub fn single_graph(&self) -> &Graph {
        debug_assert_eq!(self.graphs.len(), 1);
        &self.graphs[0]
    }
}

/// Rows skipped (with reason counts) while loading a lossy source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadStats {
    pub skipped: usize,
}
