//! TU-format graph-classification dataset loader.
//!
//! A TU directory holds `<DS>_A.txt` (global edge list, 1-based),
//! `<DS>_graph_indicator.txt` (graph id per node), `<DS>_graph_labels.txt`,
//! and optional `<DS>_node_labels.txt` / `<DS>_node_attributes.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, Graph, Task};

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn find_prefix(dir: &Path) -> Result<(String, PathBuf), DataError> {
    let entries = fs::read_dir(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    for name in names {
        if let Some(ds) = name.strip_suffix("_A.txt") {
            return Ok((ds.to_string(), dir.join(&name)));
        }
    }
    Err(DataError::MissingFile(format!(
        "{}/<DS>_A.txt",
        dir.display()
    )))
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64, DataError> {
    s.trim().parse::<i64>().map_err(|e| DataError::Parse {
        file: path.display().to_string(),
        line,
        msg: format!("bad integer `{s}`: {e}"),
    })
}

/// Loads every graph in a TU directory. Node features are the attribute
/// columns concatenated with a one-hot encoding of node labels when both
/// files are present; graphs with neither get a constant feature.
pub fn load_tu(dir: &Path) -> Result<Dataset, DataError> {
    let (ds_name, a_path) = find_prefix(dir)?;
    let indicator_path = dir.join(format!("{ds_name}_graph_indicator.txt"));
    let labels_path = dir.join(format!("{ds_name}_graph_labels.txt"));
    if !indicator_path.exists() {
        return Err(DataError::MissingFile(indicator_path.display().to_string()));
    }
    if !labels_path.exists() {
        return Err(DataError::MissingFile(labels_path.display().to_string()));
    }

    // graph id per node (1-based in the files) -> 0-based
    let indicator: Vec<usize> = read_lines(&indicator_path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&indicator_path, i + 1, l).map(|v| (v - 1) as usize))
        .collect::<Result<_, _>>()?;
    let num_nodes = indicator.len();
    let num_graphs = indicator.iter().copied().max().map_or(0, |m| m + 1);

    let raw_graph_labels: Vec<i64> = read_lines(&labels_path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&labels_path, i + 1, l))
        .collect::<Result<_, _>>()?;
    if raw_graph_labels.len() != num_graphs {
        return Err(DataError::Parse {
            file: labels_path.display().to_string(),
            line: 0,
            msg: format!(
                "{} graph labels but indicator spans {} graphs",
                raw_graph_labels.len(),
                num_graphs
            ),
        });
    }
    // remap distinct labels (ascending) to [0, num_classes)
    let label_map: BTreeMap<i64, u32> = raw_graph_labels
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    let num_classes = label_map.len();

    // optional per-node labels and attributes
    let node_labels_path = dir.join(format!("{ds_name}_node_labels.txt"));
    let node_labels: Option<Vec<i64>> = if node_labels_path.exists() {
        Some(
            read_lines(&node_labels_path)?
                .iter()
                .enumerate()
                .map(|(i, l)| parse_int(&node_labels_path, i + 1, l))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };
    let attrs_path = dir.join(format!("{ds_name}_node_attributes.txt"));
    let node_attrs: Option<Vec<Vec<f32>>> = if attrs_path.exists() {
        let rows = read_lines(&attrs_path)?;
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let vals: Result<Vec<f32>, _> = row
                .split(',')
                .map(|v| v.trim().parse::<f32>())
                .collect();
            out.push(vals.map_err(|e| DataError::Parse {
                file: attrs_path.display().to_string(),
                line: i + 1,
                msg: format!("bad attribute row: {e}"),
            })?);
        }
        Some(out)
    } else {
        None
    };

    // distinct node label values (ascending) -> one-hot slots
    let label_slots: BTreeMap<i64, usize> = node_labels
        .as_ref()
        .map(|ls| {
            ls.iter()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, &l)| (l, i))
                .collect()
        })
        .unwrap_or_default();

    let attr_dim = node_attrs.as_ref().map_or(0, |a| a.first().map_or(0, |r| r.len()));
    let onehot_dim = label_slots.len();
    let feature_dim = match (attr_dim, onehot_dim) {
        (0, 0) => 1, // constant feature
        (a, o) => a + o,
    };

    // per-graph local node indices, preserving file order
    let mut graph_nodes: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    let mut local_index = vec![0u32; num_nodes];
    for (node, &g) in indicator.iter().enumerate() {
        local_index[node] = graph_nodes[g].len() as u32;
        graph_nodes[g].push(node);
    }

    let mut graph_edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_graphs];
    for (i, row) in read_lines(&a_path)?.iter().enumerate() {
        let line = i + 1;
        let parts: Vec<&str> = row.split(',').map(|p| p.trim()).collect();
        if parts.len() != 2 {
            return Err(DataError::Parse {
                file: a_path.display().to_string(),
                line,
                msg: format!("expected `src, dst`, got `{row}`"),
            });
        }
        let a = parse_int(&a_path, line, parts[0])? - 1;
        let b = parse_int(&a_path, line, parts[1])? - 1;
        if a < 0 || b < 0 || a as usize >= num_nodes || b as usize >= num_nodes {
            return Err(DataError::Parse {
                file: a_path.display().to_string(),
                line,
                msg: format!("node id out of range in `{row}`"),
            });
        }
        let (a, b) = (a as usize, b as usize);
        if indicator[a] != indicator[b] {
            return Err(DataError::Parse {
                file: a_path.display().to_string(),
                line,
                msg: format!(
                    "edge ({},{}) crosses graph boundary ({} vs {})",
                    a + 1,
                    b + 1,
                    indicator[a] + 1,
                    indicator[b] + 1
                ),
            });
        }
        if a == b {
            continue;
        }
        graph_edges[indicator[a]].push((local_index[a], local_index[b]));
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let nodes = &graph_nodes[g];
        let mut features = Vec::with_capacity(nodes.len() * feature_dim);
        for &node in nodes {
            if attr_dim == 0 && onehot_dim == 0 {
                features.push(1.0);
                continue;
            }
            if let Some(attrs) = &node_attrs {
                features.extend_from_slice(&attrs[node]);
            }
            if let Some(labels) = &node_labels {
                let slot = label_slots[&labels[node]];
                for j in 0..onehot_dim {
                    features.push(if j == slot { 1.0 } else { 0.0 });
                }
            }
        }
        let mut graph = Graph::new(
            nodes.len(),
            graph_edges[g].clone(),
            features,
            feature_dim,
        )?;
        graph.graph_label = Some(label_map[&raw_graph_labels[g]]);
        graphs.push(graph);
    }

    let dataset = Dataset {
        name: ds_name.to_lowercase(),
        task: Task::GraphClassification,
        num_classes,
        feature_dim,
        graphs,
    };
    dataset.validate()?;
    Ok(dataset)
}
