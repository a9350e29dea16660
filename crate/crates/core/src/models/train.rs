//! Task-dispatched training loops with best-validation checkpointing.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::gcn::{gcn_norm, NormalizedAdjacency};
use super::gin::GinBatch;
use super::{
    GaeModel, GcnModel, GinModel, GraphModel, ModelInstance, ModelKind, ModelSpec, NoQuant,
    QuantHooks,
};
use crate::data::{DataError, Dataset, Graph, Split, Task};
use crate::nn::{adam_step, AdamState, Grads, ModelState, OptimConfig, Parameter, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset task `{dataset}` does not match model `{model}`")]
    TaskMismatch {
        dataset: &'static str,
        model: &'static str,
    },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged {
        epoch: usize,
        history: Vec<EpochStat>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A trained model together with its run record.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelInstance,
    pub spec: ModelSpec,
    pub seed: u64,
    pub history: Vec<EpochStat>,
    pub best_val: f64,
    pub test_metric: f64,
    pub train_seconds: f64,
}

/// Extension points used by quantization-aware trainers. Plain training uses
/// the no-op implementation.
pub trait TrainExtension {
    fn quant(&mut self) -> &mut dyn QuantHooks;
    /// Called before each optimization step with the degrees of the nodes
    /// participating in it.
    fn begin_step(&mut self, degrees: &[usize], rng: &mut ChaCha8Rng) {
        let _ = (degrees, rng);
    }
    fn set_train_mode(&mut self, train: bool) {
        let _ = train;
    }
    /// Additional trainable parameters (e.g. learnable bit-widths).
    fn extra_params_mut(&mut self) -> &mut [Parameter] {
        &mut []
    }
    /// Pull gradients for the extra parameters out of the tape gradients.
    fn absorb_grads(&mut self, grads: &mut Grads) {
        let _ = grads;
    }
    fn after_optim_step(&mut self) {}
}

/// Full-precision training: no hooks, no extra parameters.
pub struct PlainTraining(pub NoQuant);

impl Default for PlainTraining {
    fn default() -> Self {
        Self(NoQuant)
    }
}

impl TrainExtension for PlainTraining {
    fn quant(&mut self) -> &mut dyn QuantHooks {
        &mut self.0
    }
}

/// Builds the model an architecture spec describes for a dataset.
pub fn build_model(
    spec: &ModelSpec,
    dataset: &Dataset,
    seed: u64,
) -> Result<ModelInstance, TrainError> {
    let expected = match spec.kind {
        ModelKind::Gcn2 => Task::NodeClassification,
        ModelKind::Gin5 => Task::GraphClassification,
        ModelKind::Gae => Task::LinkPrediction,
    };
    if dataset.task != expected {
        return Err(TrainError::TaskMismatch {
            dataset: dataset.task.as_str(),
            model: spec.kind.as_str(),
        });
    }
    Ok(match spec.kind {
        ModelKind::Gcn2 => ModelInstance::Gcn(GcnModel::new(
            spec,
            dataset.feature_dim,
            dataset.num_classes,
            seed,
        )),
        ModelKind::Gin5 => ModelInstance::Gin(GinModel::new(
            spec,
            dataset.feature_dim,
            dataset.num_classes,
            seed,
        )),
        ModelKind::Gae => ModelInstance::Gae(GaeModel::new(spec, dataset.feature_dim, seed)),
    })
}

/// Fresh model, trained for `optim.max_epochs`; deterministic in `seed`.
pub fn train(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    optim: &OptimConfig,
    seed: u64,
) -> Result<Trained, TrainError> {
    let model = build_model(spec, dataset, seed)?;
    run_training(
        model,
        spec,
        dataset,
        split,
        optim,
        seed,
        &mut PlainTraining::default(),
    )
}

/// Evaluation subset selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    fn index(self) -> usize {
        match self {
            Subset::Train => 0,
            Subset::Val => 1,
            Subset::Test => 2,
        }
    }
}

/// Precomputed per-task training and evaluation inputs.
pub struct TaskData(TaskInner);

/// Fixed evaluation pairs with their 0/1 targets (link prediction).
type EvalPairs = (Arc<Vec<(u32, u32)>>, Vec<f32>);

enum TaskInner {
    Node {
        adj: NormalizedAdjacency,
        x: Tensor,
        degrees: Vec<usize>,
        train_idx: Arc<Vec<u32>>,
        train_labels: Arc<Vec<u32>>,
        sets: [(Arc<Vec<u32>>, Vec<u32>); 3], // (indices, labels) per subset
    },
    Graph {
        sets: [Vec<usize>; 3],
    },
    Link {
        adj: NormalizedAdjacency,
        x: Tensor,
        degrees: Vec<usize>,
        train_pos: Vec<(u32, u32)>,
        forbidden: BTreeSet<(u32, u32)>,
        num_nodes: usize,
        // fixed evaluation pairs and 0/1 targets per subset
        sets: [EvalPairs; 3],
    },
}

fn features_tensor(g: &Graph) -> Tensor {
    Tensor::matrix(g.num_nodes, g.feature_dim, g.node_features.clone()).unwrap()
}

impl TaskData {
    pub fn new(dataset: &Dataset, split: &Split) -> Result<Self, TrainError> {
        let inner = match dataset.task {
            Task::NodeClassification => {
                let g = dataset.single_graph();
                let labels = g.node_labels.as_ref().expect("node labels required");
                let mk = |idx: &[usize]| {
                    let is: Arc<Vec<u32>> = Arc::new(idx.iter().map(|&i| i as u32).collect());
                    let ls: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
                    (is, ls)
                };
                let sets = [mk(&split.train), mk(&split.val), mk(&split.test)];
                TaskInner::Node {
                    adj: gcn_norm(g),
                    x: features_tensor(g),
                    degrees: g.degrees(),
                    train_idx: Arc::clone(&sets[0].0),
                    train_labels: Arc::new(sets[0].1.clone()),
                    sets,
                }
            }
            Task::GraphClassification => TaskInner::Graph {
                sets: [split.train.clone(), split.val.clone(), split.test.clone()],
            },
            Task::LinkPrediction => {
                let g = dataset.single_graph();
                let negatives = split.link_negatives.as_ref().ok_or_else(|| {
                    TrainError::Data(DataError::InvalidSplit(
                        "link prediction split lacks negative pairs".into(),
                    ))
                })?;
                let train_pos: Vec<(u32, u32)> =
                    split.train.iter().map(|&e| g.edges[e]).collect();
                // message passing sees only training edges
                let train_graph = Graph::new(
                    g.num_nodes,
                    train_pos.clone(),
                    g.node_features.clone(),
                    g.feature_dim,
                )?;
                let forbidden: BTreeSet<(u32, u32)> = g.edges.iter().copied().collect();
                let mk = |idx: &[usize], negs: &[(u32, u32)]| {
                    let mut pairs: Vec<(u32, u32)> = idx.iter().map(|&e| g.edges[e]).collect();
                    let mut targets = vec![1.0f32; pairs.len()];
                    pairs.extend_from_slice(negs);
                    targets.extend(std::iter::repeat_n(0.0f32, negs.len()));
                    (Arc::new(pairs), targets)
                };
                let sets = [
                    mk(&split.train, &[]),
                    mk(&split.val, &negatives.val),
                    mk(&split.test, &negatives.test),
                ];
                TaskInner::Link {
                    adj: gcn_norm(&train_graph),
                    x: features_tensor(g),
                    degrees: train_graph.degrees(),
                    train_pos,
                    forbidden,
                    num_nodes: g.num_nodes,
                    sets,
                }
            }
        };
        Ok(TaskData(inner))
    }
}

fn sample_negatives(
    num_nodes: usize,
    count: usize,
    forbidden: &BTreeSet<(u32, u32)>,
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32)> {
    let n = num_nodes as u32;
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < 1000 * count + 10_000 {
        guard += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if forbidden.contains(&key) {
            continue;
        }
        out.push(key);
    }
    out
}

fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let (n, c) = (logits.rows(), logits.cols());
    (0..n)
        .map(|r| {
            let row = &logits.data()[r * c..(r + 1) * c];
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}

fn leaves_for(tape: &mut Tape, params: &[Parameter]) -> Vec<Var> {
    params.iter().map(|p| tape.leaf(p.tensor.clone())).collect()
}

/// Backward pass plus one optimizer step over model and extension parameters.
fn optimize_step(
    params: &mut [Parameter],
    tape: &Tape,
    loss: Var,
    leaves: &[Var],
    adams: &mut (AdamState, AdamState),
    optim: &OptimConfig,
    ext: &mut dyn TrainExtension,
) {
    let mut grads = tape.backward(loss).expect("loss is scalar by construction");
    for (leaf, p) in leaves.iter().zip(params.iter_mut()) {
        p.tensor.set_grad(grads[leaf.0].take());
    }
    ext.absorb_grads(&mut grads);
    adam_step(params, &mut adams.0, optim);
    adam_step(ext.extra_params_mut(), &mut adams.1, optim);
    ext.after_optim_step();
}

/// Trains `model` in place for `optim.max_epochs`, tracking the best
/// validation state and restoring it on exit.
pub fn run_training(
    mut model: ModelInstance,
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    optim: &OptimConfig,
    seed: u64,
    ext: &mut dyn TrainExtension,
) -> Result<Trained, TrainError> {
    let started = std::time::Instant::now();
    let data = TaskData::new(dataset, split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ 0x7261696e);
    let mut adams = (
        AdamState::new(model.params()),
        AdamState::new(ext.extra_params_mut()),
    );

    let mut history = Vec::with_capacity(optim.max_epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_state: Option<ModelState> = None;

    for epoch in 1..=optim.max_epochs {
        ext.set_train_mode(true);
        let train_loss = run_epoch(&mut model, dataset, &data, optim, &mut adams, &mut rng, ext);
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, history });
        }
        ext.set_train_mode(false);
        let val_metric = eval_with_hooks(&mut model, dataset, &data, Subset::Val, ext.quant());
        history.push(EpochStat {
            epoch,
            train_loss,
            val_metric,
        });
        if val_metric > best_val {
            best_val = val_metric;
            best_state = Some(model.state());
        }
    }

    if let Some(state) = &best_state {
        model
            .load_state(state)
            .expect("best state matches model layout");
    }
    ext.set_train_mode(false);
    let test_metric = eval_with_hooks(&mut model, dataset, &data, Subset::Test, ext.quant());
    Ok(Trained {
        model,
        spec: spec.clone(),
        seed,
        history,
        best_val,
        test_metric,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

fn run_epoch(
    model: &mut ModelInstance,
    dataset: &Dataset,
    data: &TaskData,
    optim: &OptimConfig,
    adams: &mut (AdamState, AdamState),
    rng: &mut ChaCha8Rng,
    ext: &mut dyn TrainExtension,
) -> f64 {
    match (&mut *model, &data.0) {
        (
            ModelInstance::Gcn(gcn),
            TaskInner::Node {
                adj,
                x,
                degrees,
                train_idx,
                train_labels,
                ..
            },
        ) => {
            ext.begin_step(degrees, rng);
            let mut tape = Tape::new();
            let leaves = leaves_for(&mut tape, gcn.params());
            let xv = tape.leaf(x.clone());
            let logits = gcn.forward_leaves(&mut tape, &leaves, xv, adj, true, rng, ext.quant());
            let picked = tape.select_rows(logits, Arc::clone(train_idx));
            let mut loss = tape.softmax_cross_entropy(picked, Arc::clone(train_labels));
            loss = ext.quant().loss_extra(&mut tape, loss);
            let loss_val = tape.value(loss).scalar_value() as f64;
            optimize_step(gcn.params_mut(), &tape, loss, &leaves, adams, optim, ext);
            loss_val
        }
        (ModelInstance::Gin(gin), TaskInner::Graph { sets }) => {
            let mut order = sets[0].clone();
            order.shuffle(rng);
            let batch_size = gin.spec.batch_size.max(1);
            let mut total = 0.0f64;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch = GinBatch::new(dataset, chunk);
                let degrees = batch_degrees(&batch);
                ext.begin_step(&degrees, rng);
                let mut tape = Tape::new();
                let leaves = leaves_for(&mut tape, gin.params());
                let logits =
                    gin.forward_leaves(&mut tape, &leaves, &batch, true, rng, ext.quant());
                let mut loss = tape.softmax_cross_entropy(logits, Arc::clone(&batch.labels));
                loss = ext.quant().loss_extra(&mut tape, loss);
                total += tape.value(loss).scalar_value() as f64;
                batches += 1;
                optimize_step(gin.params_mut(), &tape, loss, &leaves, adams, optim, ext);
            }
            total / batches.max(1) as f64
        }
        (
            ModelInstance::Gae(gae),
            TaskInner::Link {
                adj,
                x,
                degrees,
                train_pos,
                forbidden,
                num_nodes,
                ..
            },
        ) => {
            ext.begin_step(degrees, rng);
            let negs = sample_negatives(*num_nodes, train_pos.len(), forbidden, rng);
            let mut pairs = train_pos.clone();
            let mut targets = vec![1.0f32; pairs.len()];
            targets.extend(std::iter::repeat_n(0.0f32, negs.len()));
            pairs.extend(negs);
            let mut tape = Tape::new();
            let leaves = leaves_for(&mut tape, gae.params());
            let xv = tape.leaf(x.clone());
            let z = gae.encode_leaves(&mut tape, &leaves, xv, adj, true, rng, ext.quant());
            let scores = tape.edge_dot(z, Arc::new(pairs));
            let mut loss = tape.bce_with_logits(scores, Arc::new(targets));
            loss = ext.quant().loss_extra(&mut tape, loss);
            let loss_val = tape.value(loss).scalar_value() as f64;
            optimize_step(gae.params_mut(), &tape, loss, &leaves, adams, optim, ext);
            loss_val
        }
        _ => unreachable!("task data prepared for a different model kind"),
    }
}

fn batch_degrees(batch: &GinBatch) -> Vec<usize> {
    let adj = &batch.adj;
    (0..adj.n_rows)
        .map(|r| adj.indptr[r + 1] - adj.indptr[r])
        .collect()
}

/// Metric on a subset: classification accuracy, or thresholded link accuracy
/// at 0.5 over the fixed positive/negative pairs.
pub fn eval_with_hooks(
    model: &mut ModelInstance,
    dataset: &Dataset,
    data: &TaskData,
    subset: Subset,
    hooks: &mut dyn QuantHooks,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // eval consumes no randomness
    match (model, &data.0) {
        (ModelInstance::Gcn(gcn), TaskInner::Node { adj, x, sets, .. }) => {
            let (idx, labels) = &sets[subset.index()];
            if idx.is_empty() {
                return 0.0;
            }
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let logits = gcn.forward(&mut tape, xv, adj, false, &mut rng, hooks);
            let picked = tape.select_rows(logits, Arc::clone(idx));
            let pred = argmax_rows(tape.value(picked));
            let hits = pred
                .iter()
                .zip(labels)
                .filter(|(p, l)| **p == **l as usize)
                .count();
            hits as f64 / labels.len() as f64
        }
        (ModelInstance::Gin(gin), TaskInner::Graph { sets }) => {
            let idx = &sets[subset.index()];
            if idx.is_empty() {
                return 0.0;
            }
            let batch_size = gin.spec.batch_size.max(1);
            let mut hits = 0usize;
            for chunk in idx.chunks(batch_size) {
                let batch = GinBatch::new(dataset, chunk);
                let mut tape = Tape::new();
                let logits = gin.forward(&mut tape, &batch, false, &mut rng, hooks);
                let pred = argmax_rows(tape.value(logits));
                hits += pred
                    .iter()
                    .zip(batch.labels.iter())
                    .filter(|(p, l)| **p == **l as usize)
                    .count();
            }
            hits as f64 / idx.len() as f64
        }
        (ModelInstance::Gae(gae), TaskInner::Link { adj, x, sets, .. }) => {
            let (pairs, targets) = &sets[subset.index()];
            if pairs.is_empty() {
                return 0.0;
            }
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let z = gae.encode(&mut tape, xv, adj, false, &mut rng, hooks);
            let scores = tape.edge_dot(z, Arc::clone(pairs));
            // sigma(s) > 0.5 iff s > 0
            let hits = tape
                .value(scores)
                .data()
                .iter()
                .zip(targets)
                .filter(|(s, t)| (**s > 0.0) == (**t > 0.5))
                .count();
            hits as f64 / targets.len() as f64
        }
        _ => unreachable!("task data prepared for a different model kind"),
    }
}

/// Full-precision metric on a subset.
pub fn evaluate(
    model: &mut ModelInstance,
    dataset: &Dataset,
    split: &Split,
    subset: Subset,
) -> Result<f64, TrainError> {
    let data = TaskData::new(dataset, split)?;
    Ok(eval_with_hooks(model, dataset, &data, subset, &mut NoQuant))
}
