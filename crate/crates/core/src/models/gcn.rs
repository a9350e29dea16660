//! GCN layers on the symmetric-normalized adjacency.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{linear_param, load_params_from_state, GraphModel, ModelSpec, QuantHooks, SiteDecl, SiteKind};
use crate::data::Graph;
use crate::nn::{Csr, ModelState, Parameter, StateError, Tape, Var};

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2}, where D̃ counts degrees of A + I.
/// Symmetric, with every diagonal entry positive.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub csr: Arc<Csr>,
}

/// Builds the normalized adjacency: self-loops added, entry (i,j) equal to
/// 1/√(d̃ᵢ·d̃ⱼ). Isolated nodes get d̃ = 1.
pub fn gcn_norm(graph: &Graph) -> NormalizedAdjacency {
    let n = graph.num_nodes;
    let mut deg = vec![1.0f64; n]; // self-loop
    for &(a, b) in &graph.edges {
        deg[a as usize] += 1.0;
        deg[b as usize] += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(2 * graph.num_edges() + n);
    for (i, &v) in inv_sqrt.iter().enumerate() {
        triplets.push((i as u32, i as u32, (v * v) as f32));
    }
    for (a, b) in graph.symmetric_edges() {
        let v = (inv_sqrt[a as usize] * inv_sqrt[b as usize]) as f32;
        triplets.push((a, b, v));
    }
    NormalizedAdjacency {
        csr: Arc::new(Csr::from_triplets(n, n, triplets)),
    }
}

/// Stack of GCN layers: layer ℓ computes Â·(H·Wℓ) + bℓ, with ELU and dropout
/// between layers and none after the last.
#[derive(Debug, Clone)]
pub struct GcnModel {
    pub spec: ModelSpec,
    params: Vec<Parameter>,
    layers: Vec<(usize, usize)>, // (weight, bias) parameter indices
}

impl GcnModel {
    pub fn new(spec: &ModelSpec, in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new_with_rng(spec, &[in_dim, spec.hidden_dim, out_dim], &mut rng)
    }

    /// Explicit layer widths, e.g. `[in, hidden, out]`.
    pub fn new_with_rng(spec: &ModelSpec, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(widths.len() >= 2);
        let mut params = Vec::new();
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            layers.push(linear_param(&mut params, &format!("conv{}", i + 1), w[0], w[1], rng));
        }
        Self {
            spec: spec.clone(),
            params,
            layers,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Logits [n × out_dim] for node features `x` under adjacency `adj`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        adj: &NormalizedAdjacency,
        train: bool,
        rng: &mut ChaCha8Rng,
        hooks: &mut dyn QuantHooks,
    ) -> Var {
        let leaves: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        self.forward_leaves(tape, &leaves, x, adj, train, rng, hooks)
    }

    /// Forward with parameters already on the tape (training path).
    #[allow(clippy::too_many_arguments)]
    pub fn forward_leaves(
        &self,
        tape: &mut Tape,
        leaves: &[Var],
        x: Var,
        adj: &NormalizedAdjacency,
        train: bool,
        rng: &mut ChaCha8Rng,
        hooks: &mut dyn QuantHooks,
    ) -> Var {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w_idx, b_idx)) in self.layers.iter().enumerate() {
            let wq = hooks.weight(tape, &format!("conv{}.weight", i + 1), leaves[w_idx]);
            let hw = tape.matmul(h, wq);
            let agg = tape.spmm(&adj.csr, hw);
            h = tape.add_bias(agg, leaves[b_idx]);
            h = hooks.activation(tape, &format!("conv{}.out", i + 1), h, true);
            if i != last {
                h = tape.elu(h);
                h = tape.dropout(h, self.spec.dropout, train, rng);
            }
        }
        h
    }
}

impl GraphModel for GcnModel {
    fn params(&self) -> &[Parameter] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }
    fn state(&self) -> ModelState {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.clone()))
            .collect()
    }
    fn load_state(&mut self, state: &ModelState) -> Result<(), StateError> {
        load_params_from_state(&mut self.params, state)
    }
    fn quant_sites(&self) -> Vec<SiteDecl> {
        let mut sites = Vec::new();
        for i in 1..=self.layers.len() {
            sites.push(SiteDecl {
                id: format!("conv{i}.weight"),
                kind: SiteKind::Weight,
            });
            sites.push(SiteDecl {
                id: format!("conv{i}.out"),
                kind: SiteKind::Activation { node_indexed: true },
            });
        }
        sites
    }
}
