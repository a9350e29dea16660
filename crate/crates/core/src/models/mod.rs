//! Task models: GCN node classifier, GIN graph classifier, GAE link predictor.

pub mod gae;
pub mod gcn;
pub mod gin;
pub mod train;

use rand_chacha::ChaCha8Rng;

use crate::nn::init::glorot_uniform;
use crate::nn::{ModelState, Parameter, StateError, Tape, Tensor, Var};

pub use gae::{gae_link_score, GaeModel};
pub use gcn::{gcn_norm, GcnModel, NormalizedAdjacency};
pub use gin::{GinBatch, GinModel};
pub use train::{
    build_model, eval_with_hooks, evaluate, run_training, train, EpochStat, PlainTraining,
    Subset, TaskData, Trained, TrainError, TrainExtension,
};

/// Architecture selector plus the knobs shared across model kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub dropout: f32,
    /// GIN aggregation weight on the center node, h' = MLP((1+ε)h + Σ h_u).
    pub epsilon: f32,
    pub gin_layers: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gcn2,
    Gin5,
    Gae,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gcn2 => "gcn2",
            ModelKind::Gin5 => "gin5",
            ModelKind::Gae => "gae",
        }
    }
}

impl ModelSpec {
    /// Two-layer GCN for node classification, hidden width 16.
    pub fn gcn2() -> Self {
        Self {
            kind: ModelKind::Gcn2,
            hidden_dim: 16,
            dropout: 0.5,
            epsilon: 0.0,
            gin_layers: 0,
            batch_size: 0,
        }
    }

    /// Five GIN layers with batch norm, sum readout, two-layer head.
    pub fn gin5() -> Self {
        Self {
            kind: ModelKind::Gin5,
            hidden_dim: 64,
            dropout: 0.5,
            epsilon: 0.0,
            gin_layers: 5,
            batch_size: 32,
        }
    }

    /// GCN encoder with inner-product decoder for link prediction.
    pub fn gae() -> Self {
        Self {
            kind: ModelKind::Gae,
            hidden_dim: 32,
            dropout: 0.0,
            epsilon: 0.0,
            gin_layers: 0,
            batch_size: 0,
        }
    }
}

/// One fake-quantizable tensor site in a model's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDecl {
    pub id: String,
    pub kind: SiteKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Weight,
    /// Activations; `node_indexed` marks per-node tensors eligible for
    /// degree-based protection.
    Activation { node_indexed: bool },
}

/// Hooks a quantizing trainer installs into model forwards. The identity
/// implementation (`NoQuant`) is full-precision training.
pub trait QuantHooks {
    fn weight(&mut self, tape: &mut Tape, site: &str, w: Var) -> Var;
    fn activation(&mut self, tape: &mut Tape, site: &str, x: Var, node_indexed: bool) -> Var;
    /// Extra loss terms (e.g. a memory penalty on learned bit-widths).
    fn loss_extra(&mut self, tape: &mut Tape, loss: Var) -> Var {
        let _ = tape;
        loss
    }
}

/// Full-precision pass-through hooks.
pub struct NoQuant;

impl QuantHooks for NoQuant {
    fn weight(&mut self, _tape: &mut Tape, _site: &str, w: Var) -> Var {
        w
    }
    fn activation(&mut self, _tape: &mut Tape, _site: &str, x: Var, _node_indexed: bool) -> Var {
        x
    }
}

/// Uniform access to a model's named parameters and serializable state.
pub trait GraphModel {
    fn params(&self) -> &[Parameter];
    fn params_mut(&mut self) -> &mut [Parameter];
    /// Parameters and buffers in registration order.
    fn state(&self) -> ModelState;
    fn load_state(&mut self, state: &ModelState) -> Result<(), StateError>;
    fn quant_sites(&self) -> Vec<SiteDecl>;
}

/// Concrete model behind a `ModelSpec`.
#[derive(Debug, Clone)]
pub enum ModelInstance {
    Gcn(GcnModel),
    Gin(GinModel),
    Gae(GaeModel),
}

impl ModelInstance {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelInstance::Gcn(_) => ModelKind::Gcn2,
            ModelInstance::Gin(_) => ModelKind::Gin5,
            ModelInstance::Gae(_) => ModelKind::Gae,
        }
    }

    fn inner(&self) -> &dyn GraphModel {
        match self {
            ModelInstance::Gcn(m) => m,
            ModelInstance::Gin(m) => m,
            ModelInstance::Gae(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn GraphModel {
        match self {
            ModelInstance::Gcn(m) => m,
            ModelInstance::Gin(m) => m,
            ModelInstance::Gae(m) => m,
        }
    }
}

impl GraphModel for ModelInstance {
    fn params(&self) -> &[Parameter] {
        self.inner().params()
    }
    fn params_mut(&mut self) -> &mut [Parameter] {
        self.inner_mut().params_mut()
    }
    fn state(&self) -> ModelState {
        self.inner().state()
    }
    fn load_state(&mut self, state: &ModelState) -> Result<(), StateError> {
        self.inner_mut().load_state(state)
    }
    fn quant_sites(&self) -> Vec<SiteDecl> {
        self.inner().quant_sites()
    }
}

/// Registers a Glorot weight and zero bias; returns their parameter indices.
pub(crate) fn linear_param(
    params: &mut Vec<Parameter>,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let w = glorot_uniform(rng, in_dim, out_dim);
    params.push(Parameter::new(format!("{prefix}.weight"), w, true));
    let w_idx = params.len() - 1;
    params.push(Parameter::new(
        format!("{prefix}.bias"),
        Tensor::zeros(&[out_dim]),
        false,
    ));
    (w_idx, w_idx + 1)
}

/// Shared helper: restore parameter values from a state by name.
pub(crate) fn load_params_from_state(
    params: &mut [Parameter],
    state: &ModelState,
) -> Result<(), StateError> {
    for p in params.iter_mut() {
        let t = state
            .get(&p.name)
            .ok_or_else(|| StateError::UnknownName(p.name.clone()))?;
        if t.shape() != p.tensor.shape() {
            return Err(StateError::ShapeMismatch {
                name: p.name.clone(),
                expected: p.tensor.shape().to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        let grad = p.tensor.grad().map(|g| g.to_vec());
        p.tensor = t.clone();
        p.tensor.set_grad(grad);
    }
    Ok(())
}
