//! GIN graph classifier with block-diagonal batching and sum readout.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{linear_param, GraphModel, ModelSpec, QuantHooks, SiteDecl, SiteKind};
use crate::data::Dataset;
use crate::nn::init::{ones_vec, zeros_vec};
use crate::nn::{BatchNormState, Csr, ModelState, Parameter, StateError, Tape, Tensor, Var};

/// A batch of graphs composed block-diagonally: one adjacency over the union
/// of nodes plus a node → graph membership vector.
#[derive(Debug, Clone)]
pub struct GinBatch {
    pub adj: Arc<Csr>,
    pub features: Tensor,
    pub membership: Arc<Vec<u32>>,
    pub num_graphs: usize,
    pub labels: Arc<Vec<u32>>,
}

impl GinBatch {
    /// Builds a batch from dataset graph indices. Adjacency is the plain
    /// symmetric 0/1 matrix without self-loops; GIN adds the center term.
    /// Panics on an empty node set: there is nothing to classify.
    pub fn new(dataset: &Dataset, graph_indices: &[usize]) -> Self {
        let total_nodes: usize = graph_indices
            .iter()
            .map(|&gi| dataset.graphs[gi].num_nodes)
            .sum();
        assert!(total_nodes > 0, "empty graph batch");
        let d = dataset.feature_dim;
        let mut triplets = Vec::new();
        let mut features = Vec::new();
        let mut membership = Vec::new();
        let mut labels = Vec::with_capacity(graph_indices.len());
        let mut offset = 0u32;
        for (slot, &gi) in graph_indices.iter().enumerate() {
            let g = &dataset.graphs[gi];
            for (a, b) in g.symmetric_edges() {
                triplets.push((offset + a, offset + b, 1.0));
            }
            features.extend_from_slice(&g.node_features);
            membership.extend(std::iter::repeat_n(slot as u32, g.num_nodes));
            labels.push(g.graph_label.expect("graph classification needs labels"));
            offset += g.num_nodes as u32;
        }
        let n = offset as usize;
        GinBatch {
            adj: Arc::new(Csr::from_triplets(n, n, triplets)),
            features: Tensor::matrix(n, d, features).unwrap(),
            membership: Arc::new(membership),
            num_graphs: graph_indices.len(),
            labels: Arc::new(labels),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

struct GinLayer {
    lin1: (usize, usize),
    bn: (usize, usize), // gamma, beta parameter indices
    lin2: (usize, usize),
}

/// GINConv×L → sum readout → two-layer classifier head. Each conv MLP is
/// Linear→BatchNorm→ReLU→Linear over (1+ε)·h + Σ_{u∈N(v)} h_u.
pub struct GinModel {
    pub spec: ModelSpec,
    params: Vec<Parameter>,
    layers: Vec<GinLayer>,
    bn_states: Vec<BatchNormState>,
    head1: (usize, usize),
    head2: (usize, usize),
}

impl Clone for GinModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            params: self.params.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| GinLayer {
                    lin1: l.lin1,
                    bn: l.bn,
                    lin2: l.lin2,
                })
                .collect(),
            bn_states: self.bn_states.clone(),
            head1: self.head1,
            head2: self.head2,
        }
    }
}

impl std::fmt::Debug for GinModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GinModel")
            .field("layers", &self.layers.len())
            .field("hidden", &self.spec.hidden_dim)
            .finish()
    }
}

impl GinModel {
    pub fn new(spec: &ModelSpec, in_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new_with_rng(spec, in_dim, num_classes, &mut rng)
    }

    pub fn new_with_rng(
        spec: &ModelSpec,
        in_dim: usize,
        num_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(spec.gin_layers >= 1, "GIN needs at least one layer");
        let h = spec.hidden_dim;
        let mut params = Vec::new();
        let mut layers = Vec::new();
        let mut bn_states = Vec::new();
        let mut dim = in_dim;
        for i in 1..=spec.gin_layers {
            let lin1 = linear_param(&mut params, &format!("gin{i}.lin1"), dim, h, rng);
            params.push(Parameter::new(format!("gin{i}.bn.weight"), ones_vec(h), false));
            let gamma = params.len() - 1;
            params.push(Parameter::new(format!("gin{i}.bn.bias"), zeros_vec(h), false));
            let beta = params.len() - 1;
            let lin2 = linear_param(&mut params, &format!("gin{i}.lin2"), h, h, rng);
            layers.push(GinLayer {
                lin1,
                bn: (gamma, beta),
                lin2,
            });
            bn_states.push(BatchNormState::new(h));
            dim = h;
        }
        let head1 = linear_param(&mut params, "head.lin1", h, h, rng);
        let head2 = linear_param(&mut params, "head.lin2", h, num_classes, rng);
        Self {
            spec: spec.clone(),
            params,
            layers,
            bn_states,
            head1,
            head2,
        }
    }

    /// Graph logits [num_graphs × num_classes].
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        batch: &GinBatch,
        train: bool,
        rng: &mut ChaCha8Rng,
        hooks: &mut dyn QuantHooks,
    ) -> Var {
        let leaves: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        self.forward_leaves(tape, &leaves, batch, train, rng, hooks)
    }

    pub fn forward_leaves(
        &mut self,
        tape: &mut Tape,
        leaves: &[Var],
        batch: &GinBatch,
        train: bool,
        rng: &mut ChaCha8Rng,
        hooks: &mut dyn QuantHooks,
    ) -> Var {
        assert!(batch.num_nodes() > 0, "empty batch");
        let eps = self.spec.epsilon;
        let mut h = tape.leaf(batch.features.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let site = |suffix: &str| format!("gin{}.{}", i + 1, suffix);
            let agg = tape.spmm(&batch.adj, h);
            let centered = tape.scale(h, 1.0 + eps);
            let mut z = tape.add(centered, agg);
            z = hooks.activation(tape, &site("agg"), z, true);
            let w1 = hooks.weight(tape, &site("lin1.weight"), leaves[layer.lin1.0]);
            z = tape.matmul(z, w1);
            z = tape.add_bias(z, leaves[layer.lin1.1]);
            z = tape.batch_norm(
                z,
                leaves[layer.bn.0],
                leaves[layer.bn.1],
                &mut self.bn_states[i],
                train,
            );
            z = tape.relu(z);
            let w2 = hooks.weight(tape, &site("lin2.weight"), leaves[layer.lin2.0]);
            z = tape.matmul(z, w2);
            z = tape.add_bias(z, leaves[layer.lin2.1]);
            h = hooks.activation(tape, &site("out"), z, true);
        }
        let readout = tape.segment_sum(h, Arc::clone(&batch.membership), batch.num_graphs);
        let mut z = hooks.activation(tape, "head.in", readout, false);
        let wh1 = hooks.weight(tape, "head.lin1.weight", leaves[self.head1.0]);
        z = tape.matmul(z, wh1);
        z = tape.add_bias(z, leaves[self.head1.1]);
        z = tape.relu(z);
        z = tape.dropout(z, self.spec.dropout, train, rng);
        let wh2 = hooks.weight(tape, "head.lin2.weight", leaves[self.head2.0]);
        z = tape.matmul(z, wh2);
        tape.add_bias(z, leaves[self.head2.1])
    }
}

impl GraphModel for GinModel {
    fn params(&self) -> &[Parameter] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }
    fn state(&self) -> ModelState {
        let mut st: ModelState = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.clone()))
            .collect();
        for (i, bn) in self.bn_states.iter().enumerate() {
            st.insert(
                format!("gin{}.bn.running_mean", i + 1),
                Tensor::new(vec![bn.running_mean.len()], bn.running_mean.clone()).unwrap(),
            )
            .unwrap();
            st.insert(
                format!("gin{}.bn.running_var", i + 1),
                Tensor::new(vec![bn.running_var.len()], bn.running_var.clone()).unwrap(),
            )
            .unwrap();
        }
        st
    }
    fn load_state(&mut self, state: &ModelState) -> Result<(), StateError> {
        super::load_params_from_state(&mut self.params, state)?;
        for (i, bn) in self.bn_states.iter_mut().enumerate() {
            let mean_name = format!("gin{}.bn.running_mean", i + 1);
            let var_name = format!("gin{}.bn.running_var", i + 1);
            let mean = state
                .get(&mean_name)
                .ok_or(StateError::UnknownName(mean_name))?;
            let var = state
                .get(&var_name)
                .ok_or(StateError::UnknownName(var_name))?;
            bn.running_mean = mean.data().to_vec();
            bn.running_var = var.data().to_vec();
        }
        Ok(())
    }
    fn quant_sites(&self) -> Vec<SiteDecl> {
        let mut sites = Vec::new();
        let node = SiteKind::Activation { node_indexed: true };
        let graph = SiteKind::Activation {
            node_indexed: false,
        };
        for i in 1..=self.layers.len() {
            sites.push(SiteDecl {
                id: format!("gin{i}.agg"),
                kind: node,
            });
            sites.push(SiteDecl {
                id: format!("gin{i}.lin1.weight"),
                kind: SiteKind::Weight,
            });
            sites.push(SiteDecl {
                id: format!("gin{i}.lin2.weight"),
                kind: SiteKind::Weight,
            });
            sites.push(SiteDecl {
                id: format!("gin{i}.out"),
                kind: node,
            });
        }
        sites.push(SiteDecl {
            id: "head.in".into(),
            kind: graph,
        });
        sites.push(SiteDecl {
            id: "head.lin1.weight".into(),
            kind: SiteKind::Weight,
        });
        sites.push(SiteDecl {
            id: "head.lin2.weight".into(),
            kind: SiteKind::Weight,
        });
        sites
    }
}
