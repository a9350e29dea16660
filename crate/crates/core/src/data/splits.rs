//! Deterministic train/val/test splits over nodes, graphs, or edges.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Task};

/// Fixed negative (non-edge) pairs for link-prediction evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkNegatives {
    pub val: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
}

/// Disjoint index sets over the task's population: node indices, graph
/// indices, or edge indices depending on the dataset task.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub link_negatives: Option<LinkNegatives>,
}

impl Split {
    pub fn population(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Splits the dataset population by `ratios = (train, val, test)`. The split
/// is a pure function of `(dataset, ratios, seed)`. Link-prediction splits
/// also sample one negative pair per held-out positive edge.
pub fn make_splits(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split, DataError> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(DataError::InvalidSplit("ratios must be positive".into()));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidSplit(format!(
            "ratios sum to {}, expected 1",
            rt + rv + rs
        )));
    }
    let population = match dataset.task {
        Task::NodeClassification => dataset.single_graph().num_nodes,
        Task::GraphClassification => dataset.graphs.len(),
        Task::LinkPrediction => dataset.single_graph().num_edges(),
    };
    if population < 3 {
        return Err(DataError::InvalidSplit(format!(
            "population {population} too small to split"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..population).collect();
    order.shuffle(&mut rng);

    // val and test take exact floor shares; train absorbs the remainder
    let n_val = (rv * population as f64).floor() as usize;
    let n_test = (rs * population as f64).floor() as usize;
    let n_train = population - n_val - n_test;
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    let link_negatives = if dataset.task == Task::LinkPrediction {
        let graph = dataset.single_graph();
        let n = graph.num_nodes as u32;
        let edge_set: BTreeSet<(u32, u32)> = graph.edges.iter().copied().collect();
        let mut taken = BTreeSet::new();
        let mut sample = |count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<(u32, u32)>, DataError> {
            let mut out = Vec::with_capacity(count);
            let mut attempts = 0usize;
            let budget = 200 * count.max(1) + 10_000;
            while out.len() < count {
                attempts += 1;
                if attempts > budget {
                    return Err(DataError::InvalidSplit(
                        "graph too dense to sample negative pairs".into(),
                    ));
                }
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b {
                    continue;
                }
                let key = (a.min(b), a.max(b));
                if edge_set.contains(&key) || !taken.insert(key) {
                    continue;
                }
                out.push(key);
            }
            Ok(out)
        };
        Some(LinkNegatives {
            val: sample(val.len(), &mut rng)?,
            test: sample(test.len(), &mut rng)?,
        })
    } else {
        None
    };

    Ok(Split {
        train,
        val,
        test,
        seed,
        link_negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Graph, Task};

    fn node_dataset(n: usize) -> Dataset {
        let mut g = Graph::new(n, vec![], vec![0.0; n], 1).unwrap();
        g.node_labels = Some(vec![0; n]);
        Dataset {
            name: "toy".into(),
            task: Task::NodeClassification,
            num_classes: 1,
            feature_dim: 1,
            graphs: vec![g],
        }
    }

    #[test]
    fn exact_fraction_sizes() {
        let ds = node_dataset(100);
        let s = make_splits(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn same_seed_same_split() {
        let ds = node_dataset(50);
        let a = make_splits(&ds, (0.6, 0.2, 0.2), 3).unwrap();
        let b = make_splits(&ds, (0.6, 0.2, 0.2), 3).unwrap();
        assert_eq!(a, b);
        let c = make_splits(&ds, (0.6, 0.2, 0.2), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn covers_population_disjointly() {
        let ds = node_dataset(37);
        let s = make_splits(&ds, (0.5, 0.25, 0.25), 11).unwrap();
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        let want: Vec<usize> = (0..37).collect();
        assert_eq!(all, want);
    }

    #[test]
    fn tiny_population_rejected() {
        let ds = node_dataset(2);
        assert!(make_splits(&ds, (0.4, 0.3, 0.3), 0).is_err());
    }

    #[test]
    fn bad_ratios_rejected() {
        let ds = node_dataset(10);
        assert!(make_splits(&ds, (0.5, 0.2, 0.2), 0).is_err());
        assert!(make_splits(&ds, (1.0, -0.5, 0.5), 0).is_err());
    }
}
