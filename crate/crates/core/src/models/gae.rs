//! Graph autoencoder: GCN encoder, inner-product edge decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gcn::NormalizedAdjacency;
use super::{linear_param, load_params_from_state, GraphModel, ModelSpec, QuantHooks, SiteDecl, SiteKind};
use crate::nn::tape::sigmoid_f;
use crate::nn::{ModelState, Parameter, StateError, Tape, Tensor, TensorError, Var};

/// Two-layer GCN encoder producing node embeddings; link probability is
/// σ(zᵤ·zᵥ).
#[derive(Debug, Clone)]
pub struct GaeModel {
    pub spec: ModelSpec,
    params: Vec<Parameter>,
    layers: Vec<(usize, usize)>,
}

impl GaeModel {
    pub fn new(spec: &ModelSpec, in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new_with_rng(spec, in_dim, &mut rng)
    }

    pub fn new_with_rng(spec: &ModelSpec, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = spec.hidden_dim;
        let emb = (hidden / 2).max(2);
        let widths = [in_dim, hidden, emb];
        let mut params = Vec::new();
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            layers.push(linear_param(&mut params, &format!("enc{}", i + 1), w[0], w[1], rng));
        }
        Self {
            spec: spec.clone(),
            params,
            layers,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.params[self.layers.last().unwrap().1].tensor.len()
    }

    /// Node embeddings [n × emb].
    pub fn encode(
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
        self.encode_leaves(tape, &leaves, x, adj, train, rng, hooks)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn encode_leaves(
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
            let wq = hooks.weight(tape, &format!("enc{}.weight", i + 1), leaves[w_idx]);
            let hw = tape.matmul(h, wq);
            let agg = tape.spmm(&adj.csr, hw);
            h = tape.add_bias(agg, leaves[b_idx]);
            h = hooks.activation(tape, &format!("enc{}.out", i + 1), h, true);
            if i != last {
                h = tape.elu(h);
                h = tape.dropout(h, self.spec.dropout, train, rng);
            }
        }
        h
    }
}

/// σ(zᵤ·zᵥ) on a finished embedding matrix; out-of-range indices error.
pub fn gae_link_score(z: &Tensor, u: usize, v: usize) -> Result<f32, TensorError> {
    let n = z.rows();
    let d = z.cols();
    if u >= n || v >= n {
        return Err(TensorError::ShapeMismatch {
            op: "gae_link_score",
            left: z.shape().to_vec(),
            right: vec![u, v],
        });
    }
    let zu = &z.data()[u * d..(u + 1) * d];
    let zv = &z.data()[v * d..(v + 1) * d];
    let dot: f32 = zu.iter().zip(zv).map(|(a, b)| a * b).sum();
    Ok(sigmoid_f(dot))
}

impl GraphModel for GaeModel {
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
                id: format!("enc{i}.weight"),
                kind: SiteKind::Weight,
            });
            sites.push(SiteDecl {
                id: format!("enc{i}.out"),
                kind: SiteKind::Activation { node_indexed: true },
            });
        }
        sites
    }
}
