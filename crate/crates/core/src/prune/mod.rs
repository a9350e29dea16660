//! Magnitude-based pruning: mask computation, zero-pinning, and reporting.

pub mod sweep;

use thiserror::Error;

use crate::models::GraphModel;
use crate::nn::Parameter;

pub use sweep::{
    default_lambda_grid, fine_tune, fine_tune_config, lottery_ticket_experiment,
    regularization_sweep, LotteryOutcome, RegRecord,
};

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("sparsity {0} outside [0, 1)")]
    BadSparsity(f64),
    #[error("mask names parameter `{0}` not present in model")]
    UnknownParameter(String),
    #[error("mask shape mismatch for `{0}`")]
    ShapeMismatch(String),
    #[error("rounds must be >= 1")]
    BadRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneMethod {
    Global,
    LayerWise,
}

impl PruneMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PruneMethod::Global => "global",
            PruneMethod::LayerWise => "layerwise",
        }
    }
}

/// Boolean keep-masks for every prunable parameter (true = kept).
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub method: PruneMethod,
    pub target_sparsity: f64,
    entries: Vec<(String, Vec<bool>)>,
}

impl PruneMask {
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[bool])> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m.as_slice()))
    }

    pub fn get(&self, name: &str) -> Option<&[bool]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.as_slice())
    }

    pub fn pruned_count(&self) -> usize {
        self.entries
            .iter()
            .map(|(_, m)| m.iter().filter(|&&k| !k).count())
            .sum()
    }

    /// Pruned set monotonicity helper: is every entry pruned here also
    /// pruned in `other`?
    pub fn subset_of(&self, other: &PruneMask) -> bool {
        self.entries.iter().all(|(name, mask)| {
            other.get(name).is_some_and(|om| {
                mask.iter().zip(om).all(|(&keep, &okeep)| keep || !okeep)
            })
        })
    }
}

fn check_sparsity(s: f64) -> Result<(), PruneError> {
    if !(0.0..1.0).contains(&s) {
        return Err(PruneError::BadSparsity(s));
    }
    Ok(())
}

/// Pools all prunable weights; masks out exactly floor(s·N) of the
/// smallest-magnitude entries. Ties break by (registration order, flat
/// index) ascending.
pub fn global_magnitude_prune(params: &[Parameter], s: f64) -> Result<PruneMask, PruneError> {
    check_sparsity(s)?;
    let mut pool: Vec<(f32, usize, usize)> = Vec::new(); // (|w|, param idx, flat idx)
    for (pi, p) in params.iter().enumerate() {
        if !p.prunable {
            continue;
        }
        for (fi, &w) in p.tensor.data().iter().enumerate() {
            pool.push((w.abs(), pi, fi));
        }
    }
    let k = (s * pool.len() as f64).floor() as usize;
    pool.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut entries: Vec<(String, Vec<bool>)> = params
        .iter()
        .filter(|p| p.prunable)
        .map(|p| (p.name.clone(), vec![true; p.tensor.len()]))
        .collect();
    let slot: std::collections::HashMap<usize, usize> = params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.prunable)
        .enumerate()
        .map(|(ei, (pi, _))| (pi, ei))
        .collect();
    for &(_, pi, fi) in pool.iter().take(k) {
        entries[slot[&pi]].1[fi] = false;
    }
    Ok(PruneMask {
        method: PruneMethod::Global,
        target_sparsity: s,
        entries,
    })
}

/// Within each prunable parameter independently, masks floor(s·n) smallest
/// magnitudes; same tie-break by flat index.
pub fn layerwise_magnitude_prune(params: &[Parameter], s: f64) -> Result<PruneMask, PruneError> {
    check_sparsity(s)?;
    let mut entries = Vec::new();
    for p in params.iter().filter(|p| p.prunable) {
        let n = p.tensor.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| {
            let (wa, wb) = (p.tensor.data()[a].abs(), p.tensor.data()[b].abs());
            wa.partial_cmp(&wb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let k = (s * n as f64).floor() as usize;
        let mut mask = vec![true; n];
        for &fi in order.iter().take(k) {
            mask[fi] = false;
        }
        entries.push((p.name.clone(), mask));
    }
    Ok(PruneMask {
        method: PruneMethod::LayerWise,
        target_sparsity: s,
        entries,
    })
}

/// Dispatch on method.
pub fn magnitude_prune(
    params: &[Parameter],
    method: PruneMethod,
    s: f64,
) -> Result<PruneMask, PruneError> {
    match method {
        PruneMethod::Global => global_magnitude_prune(params, s),
        PruneMethod::LayerWise => layerwise_magnitude_prune(params, s),
    }
}

/// Zeroes masked weights and stores the mask on each parameter so the
/// optimizer re-pins them after every step.
pub fn apply_mask(model: &mut dyn GraphModel, mask: &PruneMask) -> Result<(), PruneError> {
    for (name, bits) in mask.entries() {
        let param = model
            .params_mut()
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| PruneError::UnknownParameter(name.to_string()))?;
        if param.tensor.len() != bits.len() {
            return Err(PruneError::ShapeMismatch(name.to_string()));
        }
        param.mask = Some(bits.to_vec());
        param.enforce_mask();
    }
    Ok(())
}

/// Per-layer and aggregate zero fractions, counting exact zeros in the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub layers: Vec<LayerSparsity>,
    /// zero fraction over prunable parameters
    pub global_fraction: f64,
    /// zero fraction over all parameters
    pub overall_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    pub name: String,
    pub zeros: usize,
    pub total: usize,
    pub fraction: f64,
    pub prunable: bool,
}

pub fn sparsity_report(params: &[Parameter]) -> SparsityReport {
    let mut layers = Vec::with_capacity(params.len());
    let (mut pz, mut pt, mut az, mut at) = (0usize, 0usize, 0usize, 0usize);
    for p in params {
        let zeros = p.tensor.count_zeros();
        let total = p.tensor.len();
        if p.prunable {
            pz += zeros;
            pt += total;
        }
        az += zeros;
        at += total;
        layers.push(LayerSparsity {
            name: p.name.clone(),
            zeros,
            total,
            fraction: zeros as f64 / total.max(1) as f64,
            prunable: p.prunable,
        });
    }
    SparsityReport {
        layers,
        global_fraction: pz as f64 / pt.max(1) as f64,
        overall_fraction: az as f64 / at.max(1) as f64,
    }
}

impl SparsityReport {
    /// `layer,zeros,total,fraction` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,zeros,total,fraction\n");
        for l in &self.layers {
            out.push_str(&format!("{},{},{},{}\n", l.name, l.zeros, l.total, l.fraction));
        }
        out
    }
}
