//! Adam with L2 weight decay coupled into the gradient.

use super::state::Parameter;

/// Optimizer hyperparameters. `weight_decay` is the L2 rate λ; it enters the
/// update as `grad += λ·w` on prunable parameters only.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub max_epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 200,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> bool {
        (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.weight_decay >= 0.0
    }

    pub fn with_lr(mut self, lr: f32) -> Self {
        self.lr = lr;
        self
    }

    pub fn with_weight_decay(mut self, wd: f32) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn with_epochs(mut self, e: usize) -> Self {
        self.max_epochs = e;
        self
    }
}

/// First/second moment buffers, parallel to a parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Parameter]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over `params`. Parameters without a gradient, or with any
/// NaN gradient component, are left unchanged; the NaN occurrences are counted
/// in the return value. Masked entries are re-zeroed after the update.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState, cfg: &OptimConfig) -> usize {
    debug_assert!(cfg.validate());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut nan_count = 0usize;

    for (idx, p) in params.iter_mut().enumerate() {
        let Some(grad) = p.tensor.grad() else { continue };
        if grad.iter().any(|g| g.is_nan()) {
            nan_count += 1;
            continue;
        }
        let decay = if p.prunable { cfg.weight_decay } else { 0.0 };
        let grad = grad.to_vec();
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let data = p.tensor.data_mut();
        for i in 0..data.len() {
            let g = grad[i] + decay * data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.enforce_mask();
    }
    nan_count
}
