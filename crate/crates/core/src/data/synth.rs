//! Synthetic desk-scale datasets in the real on-disk formats.
//!
//! Each generator plants a learnable signal and can either return the parsed
//! dataset directly or write files in the corresponding external format
//! (citation text, TU directory, molecule CSV), so the parsers stay on the
//! tested path.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cora::parse_cora;
use super::smiles::parse_smiles;
use super::{DataError, Dataset, Graph, Task};

// ---- citation-style node classification -------------------------------------

#[derive(Debug, Clone)]
pub struct CoraSynthConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// intra-class neighbors drawn per node
    pub intra_per_node: usize,
    /// probability of one extra cross-class edge per node
    pub cross_prob: f64,
    /// probability an indicative feature bit is on
    pub bit_on: f64,
    /// probability a non-indicative bit is on
    pub bit_off: f64,
}

impl Default for CoraSynthConfig {
    fn default() -> Self {
        Self {
            num_nodes: 280,
            num_classes: 7,
            feature_dim: 63,
            intra_per_node: 3,
            cross_prob: 0.10,
            bit_on: 0.55,
            bit_off: 0.04,
        }
    }
}

/// Renders a planted-community citation dataset as `.content`/`.cites` text.
pub fn synth_cora_text(cfg: &CoraSynthConfig, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f7261);
    let c = cfg.num_classes;
    let block = cfg.feature_dim / c;
    let mut content = String::new();
    let mut labels = Vec::with_capacity(cfg.num_nodes);
    for node in 0..cfg.num_nodes {
        let class = node % c; // balanced
        labels.push(class);
        write!(content, "n{node}").unwrap();
        for f in 0..cfg.feature_dim {
            let indicative = f / block.max(1) == class;
            let p = if indicative { cfg.bit_on } else { cfg.bit_off };
            let bit = u8::from(rng.random_bool(p));
            write!(content, " {bit}").unwrap();
        }
        writeln!(content, " class{class}").unwrap();
    }
    let mut cites = String::new();
    for node in 0..cfg.num_nodes {
        let class = labels[node];
        // nodes of this class are {class, class + c, class + 2c, ...}
        let members = (cfg.num_nodes - class).div_ceil(c);
        for _ in 0..cfg.intra_per_node {
            let partner = class + rng.random_range(0..members) * c;
            debug_assert_eq!(labels[partner], class);
            if partner != node {
                writeln!(cites, "n{node} n{partner}").unwrap();
            }
        }
        if rng.random_bool(cfg.cross_prob) {
            let partner = rng.random_range(0..cfg.num_nodes);
            if partner != node {
                writeln!(cites, "n{node} n{partner}").unwrap();
            }
        }
    }
    (content, cites)
}

pub fn synth_cora(cfg: &CoraSynthConfig, seed: u64) -> Result<Dataset, DataError> {
    let (content, cites) = synth_cora_text(cfg, seed);
    let (mut ds, _) = parse_cora(&content, &cites, "<synth.content>", "<synth.cites>")?;
    ds.name = "synth-cora".into();
    Ok(ds)
}

pub fn write_synth_cora(
    dir: &Path,
    cfg: &CoraSynthConfig,
    seed: u64,
) -> Result<(PathBuf, PathBuf), DataError> {
    let (content, cites) = synth_cora_text(cfg, seed);
    let content_path = dir.join("synth_cora.content");
    let cites_path = dir.join("synth_cora.cites");
    write_file(&content_path, content.as_bytes())?;
    write_file(&cites_path, cites.as_bytes())?;
    Ok((content_path, cites_path))
}

// ---- protein-style graph classification --------------------------------------

#[derive(Debug, Clone)]
pub struct ProteinsSynthConfig {
    pub num_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// chord density per class, as a fraction of node count
    pub chords: [f64; 2],
    /// node-label distributions per class over 3 label values
    pub label_probs: [[f64; 3]; 2],
}

impl Default for ProteinsSynthConfig {
    fn default() -> Self {
        Self {
            num_graphs: 128,
            min_nodes: 8,
            max_nodes: 20,
            chords: [0.1, 0.5],
            label_probs: [[0.7, 0.2, 0.1], [0.2, 0.3, 0.5]],
        }
    }
}

/// Graph-classification dataset: a cycle backbone per graph, denser chords
/// and a shifted node-label histogram for class 1.
pub fn synth_proteins(cfg: &ProteinsSynthConfig, seed: u64) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70726f74);
    let mut graphs = Vec::with_capacity(cfg.num_graphs);
    for g in 0..cfg.num_graphs {
        let class = (g % 2) as u32;
        let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
        let mut edges: Vec<(u32, u32)> = (0..n as u32)
            .map(|i| (i, (i + 1) % n as u32))
            .collect();
        let n_chords = (cfg.chords[class as usize] * n as f64).floor() as usize;
        for _ in 0..n_chords {
            let a = rng.random_range(0..n as u32);
            let b = rng.random_range(0..n as u32);
            if a != b {
                edges.push((a, b));
            }
        }
        let probs = cfg.label_probs[class as usize];
        let mut features = Vec::with_capacity(n * 3);
        let mut node_labels = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let label = if u < probs[0] {
                0
            } else if u < probs[0] + probs[1] {
                1
            } else {
                2
            };
            node_labels.push(label as u32);
            for j in 0..3 {
                features.push(if j == label { 1.0 } else { 0.0 });
            }
        }
        let mut graph = Graph::new(n, edges, features, 3)?;
        graph.node_labels = Some(node_labels);
        graph.graph_label = Some(class);
        graphs.push(graph);
    }
    let ds = Dataset {
        name: "synth-proteins".into(),
        task: Task::GraphClassification,
        num_classes: 2,
        feature_dim: 3,
        graphs,
    };
    ds.validate()?;
    Ok(ds)
}

/// Serializes a graph-classification dataset into the TU directory format.
/// Node labels come from the one-hot feature block when present.
pub fn write_synth_tu(dir: &Path, ds: &Dataset, prefix: &str) -> Result<(), DataError> {
    let mut a = String::new();
    let mut indicator = String::new();
    let mut graph_labels = String::new();
    let mut node_labels = String::new();
    let mut offset = 1usize; // TU files are 1-based
    for (gi, g) in ds.graphs.iter().enumerate() {
        for node in 0..g.num_nodes {
            writeln!(indicator, "{}", gi + 1).unwrap();
            let label = g
                .node_labels
                .as_ref()
                .map(|ls| ls[node])
                .unwrap_or_default();
            writeln!(node_labels, "{label}").unwrap();
        }
        for &(u, v) in &g.edges {
            writeln!(a, "{}, {}", offset + u as usize, offset + v as usize).unwrap();
            writeln!(a, "{}, {}", offset + v as usize, offset + u as usize).unwrap();
        }
        writeln!(graph_labels, "{}", g.graph_label.unwrap_or_default() + 1).unwrap();
        offset += g.num_nodes;
    }
    write_file(&dir.join(format!("{prefix}_A.txt")), a.as_bytes())?;
    write_file(
        &dir.join(format!("{prefix}_graph_indicator.txt")),
        indicator.as_bytes(),
    )?;
    write_file(
        &dir.join(format!("{prefix}_graph_labels.txt")),
        graph_labels.as_bytes(),
    )?;
    write_file(
        &dir.join(format!("{prefix}_node_labels.txt")),
        node_labels.as_bytes(),
    )?;
    Ok(())
}

// ---- molecule-style graph classification --------------------------------------

#[derive(Debug, Clone)]
pub struct BbbpSynthConfig {
    pub num_molecules: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
}

impl Default for BbbpSynthConfig {
    fn default() -> Self {
        Self {
            num_molecules: 128,
            min_atoms: 5,
            max_atoms: 12,
        }
    }
}

const CHAIN_ATOMS: [&str; 4] = ["C", "C", "N", "O"];

/// Emits SMILES rows `(name, label, smiles)`: label 1 molecules contain a
/// ring, label 0 molecules are trees.
pub fn synth_bbbp_rows(cfg: &BbbpSynthConfig, seed: u64) -> Vec<(String, u32, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x62626270);
    let mut rows = Vec::with_capacity(cfg.num_molecules);
    for m in 0..cfg.num_molecules {
        let label = (m % 2) as u32;
        let atoms = rng.random_range(cfg.min_atoms..=cfg.max_atoms);
        let mut s = String::new();
        let mut remaining = atoms;
        if label == 1 {
            // ring of 3..=min(6, atoms) atoms, then a tail
            let ring = rng.random_range(3..=atoms.min(6));
            s.push_str(CHAIN_ATOMS[rng.random_range(0..CHAIN_ATOMS.len())]);
            s.push('1');
            for _ in 1..ring {
                s.push_str(CHAIN_ATOMS[rng.random_range(0..CHAIN_ATOMS.len())]);
            }
            s.push('1');
            remaining -= ring;
        }
        while remaining > 0 {
            if s.is_empty() || !rng.random_bool(0.25) || remaining < 2 {
                s.push_str(CHAIN_ATOMS[rng.random_range(0..CHAIN_ATOMS.len())]);
                remaining -= 1;
            } else {
                s.push('(');
                s.push_str(CHAIN_ATOMS[rng.random_range(0..CHAIN_ATOMS.len())]);
                s.push(')');
                remaining -= 1;
            }
        }
        rows.push((format!("mol{m}"), label, s));
    }
    rows
}

pub fn synth_bbbp(cfg: &BbbpSynthConfig, seed: u64) -> Result<Dataset, DataError> {
    let rows = synth_bbbp_rows(cfg, seed);
    let mut graphs = Vec::with_capacity(rows.len());
    for (_, label, smiles) in &rows {
        let mut g = parse_smiles(smiles)?;
        g.graph_label = Some(*label);
        graphs.push(g);
    }
    let ds = Dataset {
        name: "synth-bbbp".into(),
        task: Task::GraphClassification,
        num_classes: 2,
        feature_dim: super::smiles::SMILES_FEATURE_DIM,
        graphs,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_synth_bbbp(
    path: &Path,
    cfg: &BbbpSynthConfig,
    seed: u64,
) -> Result<(), DataError> {
    let rows = synth_bbbp_rows(cfg, seed);
    let mut out = String::from("name,p_np,smiles\n");
    for (name, label, smiles) in rows {
        writeln!(out, "{name},{label},{smiles}").unwrap();
    }
    write_file(path, out.as_bytes())
}

// ---- plumbing ------------------------------------------------------------------

/// Random simple graph with exactly `m` distinct undirected edges.
pub fn random_graph(n: usize, m: usize, seed: u64) -> Graph {
    assert!(m <= n * (n - 1) / 2, "too many edges requested");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = std::collections::BTreeSet::new();
    while set.len() < m {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    Graph::new(n, set.into_iter().collect(), vec![1.0; n], 1).unwrap()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let mut f = fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
