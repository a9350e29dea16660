//! Citation-network loader (Cora `.content` / `.cites` text format).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DataError, Dataset, Graph, LoadStats, Task};

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a citation dataset: `.content` rows are `<id> <features...> <class>`,
/// `.cites` rows are `<cited> <citing>`. Citation pairs whose ids both appear
/// in the content file become undirected edges; unknown ids are skipped and
/// counted in the returned stats.
pub fn load_cora(content_path: &Path, cites_path: &Path) -> Result<(Dataset, LoadStats), DataError> {
    let content = read(content_path)?;
    let cites = read(cites_path)?;
    parse_cora(
        &content,
        &cites,
        &content_path.display().to_string(),
        &cites_path.display().to_string(),
    )
}

/// Text-level parser behind `load_cora`; file names are used in errors only.
pub fn parse_cora(
    content: &str,
    cites: &str,
    content_file: &str,
    cites_file: &str,
) -> Result<(Dataset, LoadStats), DataError> {
    let content_file = content_file.to_string();

    let mut id_index: HashMap<String, u32> = HashMap::new();
    let mut class_index: HashMap<String, u32> = HashMap::new();
    let mut class_order: Vec<String> = Vec::new();
    let mut features: Vec<f32> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut feature_dim: Option<usize> = None;

    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(DataError::Parse {
                file: content_file.clone(),
                line,
                msg: format!("expected `<id> <features> <class>`, got {} tokens", tokens.len()),
            });
        }
        let id = tokens[0];
        let class = tokens[tokens.len() - 1];
        let feats = &tokens[1..tokens.len() - 1];
        match feature_dim {
            None => feature_dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(DataError::Parse {
                    file: content_file.clone(),
                    line,
                    msg: format!("row has {} features, expected {}", feats.len(), d),
                })
            }
            _ => {}
        }
        for f in feats {
            features.push(f.parse::<f32>().map_err(|e| DataError::Parse {
                file: content_file.clone(),
                line,
                msg: format!("bad feature `{f}`: {e}"),
            })?);
        }
        if id_index.contains_key(id) {
            return Err(DataError::Parse {
                file: content_file.clone(),
                line,
                msg: format!("duplicate id `{id}`"),
            });
        }
        id_index.insert(id.to_string(), id_index.len() as u32);
        // class ids in first-appearance order
        let next = class_index.len() as u32;
        let cid = *class_index.entry(class.to_string()).or_insert_with(|| {
            class_order.push(class.to_string());
            next
        });
        labels.push(cid);
    }

    let num_nodes = labels.len();
    let feature_dim = feature_dim.unwrap_or(0);

    let cites_file = cites_file.to_string();
    let mut edges = Vec::new();
    let mut stats = LoadStats::default();
    for (i, raw) in cites.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(DataError::Parse {
                file: cites_file.clone(),
                line,
                msg: format!("expected `<cited> <citing>`, got {} tokens", tokens.len()),
            });
        }
        match (id_index.get(tokens[0]), id_index.get(tokens[1])) {
            (Some(&a), Some(&b)) if a != b => edges.push((a, b)),
            (Some(_), Some(_)) => stats.skipped += 1, // self-citation
            _ => stats.skipped += 1,
        }
    }

    let mut graph = Graph::new(num_nodes, edges, features, feature_dim)?;
    graph.node_labels = Some(labels);
    let dataset = Dataset {
        name: "cora".into(),
        task: Task::NodeClassification,
        num_classes: class_order.len(),
        feature_dim,
        graphs: vec![graph],
    };
    dataset.validate()?;
    Ok((dataset, stats))
}
