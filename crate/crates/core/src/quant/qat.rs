//! Quantization-aware training: per-site observers wired into model
//! forwards, DQ protection masks, and A²Q learnable bit-widths.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{Dataset, Split};
use crate::models::{
    build_model, run_training, GraphModel, ModelSpec, QuantHooks, SiteDecl, SiteKind, Trained,
    TrainError, TrainExtension,
};
use crate::nn::{Grads, OptimConfig, Parameter, Tape, Tensor, Var};

use super::degree::{degree_quant_protect, sample_mask};
use super::fake::{compute_qparams, effective_bits};
use super::observer::Observer;
use super::{QuantConfig, QuantError, QuantMode};

#[derive(Debug, Error)]
pub enum QuantTrainError {
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

struct Site {
    decl: SiteDecl,
    observer: Observer,
}

/// Per-model quantization state: one observer per declared site, optional
/// learnable bit parameters, and the current step's protection mask.
pub struct QuantCtx {
    cfg: QuantConfig,
    sites: Vec<Site>,
    betas: Vec<Parameter>,
    beta_leaves: Vec<Option<Var>>,
    /// (site, element count) pairs quantized this step, for the A²Q penalty
    penalty: Vec<(usize, usize)>,
    protect: Option<Arc<Vec<bool>>>,
    train: bool,
}

impl QuantCtx {
    pub fn new(cfg: QuantConfig, site_decls: Vec<SiteDecl>) -> Result<Self, QuantError> {
        cfg.validate()?;
        let sites: Vec<Site> = site_decls
            .into_iter()
            .map(|decl| Site {
                observer: Observer::new(cfg.observer),
                decl,
            })
            .collect();
        let betas = if cfg.mode == QuantMode::A2q {
            sites
                .iter()
                .map(|s| {
                    Parameter::new(
                        format!("{}.bits", s.decl.id),
                        Tensor::scalar(cfg.a2q.init_bits),
                        false,
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let n = sites.len();
        Ok(Self {
            cfg,
            sites,
            betas,
            beta_leaves: vec![None; n],
            penalty: Vec::new(),
            protect: None,
            train: false,
        })
    }

    pub fn config(&self) -> &QuantConfig {
        &self.cfg
    }

    /// Learned bit-width per site (A²Q); fixed bits otherwise.
    pub fn bit_map(&self) -> BitMap {
        self.sites
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let bits = if self.cfg.mode == QuantMode::A2q {
                    effective_bits(self.betas[i].tensor.scalar_value())
                } else {
                    self.cfg.bits
                };
                (s.decl.id.clone(), bits)
            })
            .collect()
    }

    fn find(&self, id: &str) -> usize {
        self.sites
            .iter()
            .position(|s| s.decl.id == id)
            .unwrap_or_else(|| panic!("unknown quantization site `{id}`"))
    }

    fn beta_leaf(&mut self, tape: &mut Tape, idx: usize) -> Var {
        if let Some(v) = self.beta_leaves[idx] {
            return v;
        }
        let v = tape.leaf(self.betas[idx].tensor.clone());
        self.beta_leaves[idx] = Some(v);
        v
    }

    /// Shared fake-quant insertion once the observer range is known.
    fn quantize(
        &mut self,
        tape: &mut Tape,
        idx: usize,
        x: Var,
        symmetric: bool,
        rows_protectable: bool,
    ) -> Var {
        let range = self.sites[idx].observer.range();
        let mode = self.cfg.backward;
        if self.cfg.mode == QuantMode::A2q {
            let count = tape.value(x).len();
            if self.train && !self.cfg.a2q.freeze_bits {
                let beta = self.beta_leaf(tape, idx);
                self.penalty.push((idx, count));
                return tape.fake_quant_learnable(x, beta, range, symmetric, mode);
            }
            let bits = effective_bits(self.betas[idx].tensor.scalar_value());
            let qp = compute_qparams(range, bits, symmetric);
            return tape.fake_quant(x, qp, mode);
        }
        let qp = compute_qparams(range, self.cfg.bits, symmetric);
        if rows_protectable && self.train && self.cfg.mode == QuantMode::Dq {
            if let Some(protect) = &self.protect {
                if protect.len() == tape.value(x).rows() {
                    return tape.fake_quant_rows(x, qp, mode, Arc::clone(protect));
                }
            }
        }
        tape.fake_quant(x, qp, mode)
    }
}

impl QuantHooks for QuantCtx {
    fn weight(&mut self, tape: &mut Tape, site: &str, w: Var) -> Var {
        if self.cfg.disabled() || !self.cfg.quantize_weights {
            return w;
        }
        let idx = self.find(site);
        debug_assert_eq!(self.sites[idx].decl.kind, SiteKind::Weight);
        if self.train {
            // the whole tensor is visible every step: exact range
            let value = tape.value(w).clone();
            self.sites[idx].observer.observe_exact(&value);
        }
        if !self.sites[idx].observer.initialized {
            return w;
        }
        self.quantize(tape, idx, w, true, false)
    }

    fn activation(&mut self, tape: &mut Tape, site: &str, x: Var, node_indexed: bool) -> Var {
        if self.cfg.disabled() {
            return x;
        }
        let idx = self.find(site);
        debug_assert!(matches!(
            self.sites[idx].decl.kind,
            SiteKind::Activation { .. }
        ));
        if self.train {
            let value = tape.value(x).clone();
            self.sites[idx].observer.observe(&value);
        }
        if !self.sites[idx].observer.initialized {
            return x;
        }
        self.quantize(tape, idx, x, false, node_indexed)
    }

    fn loss_extra(&mut self, tape: &mut Tape, loss: Var) -> Var {
        if self.cfg.mode != QuantMode::A2q
            || self.cfg.a2q.freeze_bits
            || self.cfg.a2q.lambda_mem == 0.0
            || self.penalty.is_empty()
        {
            return loss;
        }
        // loss += λ · Σ(count·β) / Σ(count·32)
        let denom: f64 = self.penalty.iter().map(|&(_, c)| 32.0 * c as f64).sum();
        let mut acc: Option<Var> = None;
        let terms = self.penalty.clone();
        for (idx, count) in terms {
            let beta = self.beta_leaf(tape, idx);
            let term = tape.scale(beta, count as f32);
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term),
            });
        }
        let total = acc.expect("penalty terms non-empty");
        let penalty = tape.scale(total, (self.cfg.a2q.lambda_mem as f64 / denom) as f32);
        tape.add(loss, penalty)
    }
}

impl TrainExtension for QuantCtx {
    fn quant(&mut self) -> &mut dyn QuantHooks {
        self
    }

    fn begin_step(&mut self, degrees: &[usize], rng: &mut ChaCha8Rng) {
        self.penalty.clear();
        self.beta_leaves.fill(None);
        if self.cfg.mode == QuantMode::Dq && !self.cfg.disabled() {
            let probs = degree_quant_protect(degrees, self.cfg.dq.p_min, self.cfg.dq.p_max)
                .expect("validated at construction");
            self.protect = Some(Arc::new(sample_mask(&probs, rng)));
        }
    }

    fn set_train_mode(&mut self, train: bool) {
        self.train = train;
    }

    fn extra_params_mut(&mut self) -> &mut [Parameter] {
        if self.cfg.mode == QuantMode::A2q && !self.cfg.a2q.freeze_bits {
            &mut self.betas
        } else {
            &mut []
        }
    }

    fn absorb_grads(&mut self, grads: &mut Grads) {
        for (i, leaf) in self.beta_leaves.iter().enumerate() {
            if let Some(v) = leaf {
                self.betas[i].tensor.set_grad(grads[v.0].take());
            }
        }
    }

    fn after_optim_step(&mut self) {
        // β projected to [2, 8] after every step
        for b in &mut self.betas {
            let v = b.tensor.scalar_value().clamp(2.0, 8.0);
            b.tensor.data_mut()[0] = v;
        }
    }
}

/// Quantization-aware training for fixed-bit modes (QAT and DQ).
pub fn qat_train(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    cfg: &QuantConfig,
    optim: &OptimConfig,
    seed: u64,
) -> Result<(Trained, QuantCtx), QuantTrainError> {
    if cfg.mode == QuantMode::A2q {
        return Err(QuantError::BadMode("a2q").into());
    }
    let model = build_model(spec, dataset, seed)?;
    let mut ctx = QuantCtx::new(cfg.clone(), model.quant_sites())?;
    let trained = run_training(model, spec, dataset, split, optim, seed, &mut ctx)?;
    Ok((trained, ctx))
}

/// Learned bits per quantization site.
pub type BitMap = Vec<(String, u8)>;

/// A²Q training: bit-widths start at `init_bits` and evolve by gradient
/// descent under the memory penalty. Returns the learned per-site bit map.
pub fn a2q_train(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    cfg: &QuantConfig,
    optim: &OptimConfig,
    seed: u64,
) -> Result<(Trained, BitMap, QuantCtx), QuantTrainError> {
    if cfg.mode != QuantMode::A2q {
        return Err(QuantError::BadMode(cfg.mode.as_str()).into());
    }
    let model = build_model(spec, dataset, seed)?;
    let mut ctx = QuantCtx::new(cfg.clone(), model.quant_sites())?;
    let trained = run_training(model, spec, dataset, split, optim, seed, &mut ctx)?;
    let bits = ctx.bit_map();
    Ok((trained, bits, ctx))
}
