//! Range observers feeding quantization parameters.

use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverKind {
    /// Running absolute min/max over all batches seen.
    Abs,
    /// Exponential moving average of per-batch extrema.
    Momentum,
    /// Per-batch nearest-rank percentile range, folded in with momentum.
    Percentile,
}

impl ObserverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObserverKind::Abs => "abs",
            ObserverKind::Momentum => "mom",
            ObserverKind::Percentile => "per",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    pub kind: ObserverKind,
    pub running_min: f32,
    pub running_max: f32,
    pub momentum: f32,
    pub percentile: f32,
    pub initialized: bool,
}

impl Observer {
    pub fn new(kind: ObserverKind) -> Self {
        Self {
            kind,
            running_min: 0.0,
            running_max: 0.0,
            momentum: 0.9,
            percentile: 99.9,
            initialized: false,
        }
    }

    pub fn range(&self) -> (f32, f32) {
        (self.running_min, self.running_max)
    }

    /// Folds one batch into the running range.
    pub fn observe(&mut self, x: &Tensor) {
        debug_assert!(!x.is_empty(), "observe needs a non-empty tensor");
        let (lo, hi) = match self.kind {
            ObserverKind::Abs | ObserverKind::Momentum => batch_min_max(x.data()),
            ObserverKind::Percentile => percentile_range(x.data(), self.percentile),
        };
        if !self.initialized {
            self.running_min = lo;
            self.running_max = hi;
            self.initialized = true;
            return;
        }
        match self.kind {
            ObserverKind::Abs => {
                self.running_min = self.running_min.min(lo);
                self.running_max = self.running_max.max(hi);
            }
            ObserverKind::Momentum | ObserverKind::Percentile => {
                let m = self.momentum;
                self.running_min = m * self.running_min + (1.0 - m) * lo;
                self.running_max = m * self.running_max + (1.0 - m) * hi;
            }
        }
        if self.running_min > self.running_max {
            std::mem::swap(&mut self.running_min, &mut self.running_max);
        }
    }

    /// One-shot exact range (used for weights, which are fully visible each
    /// step).
    pub fn observe_exact(&mut self, x: &Tensor) {
        let (lo, hi) = batch_min_max(x.data());
        self.running_min = lo;
        self.running_max = hi;
        self.initialized = true;
    }
}

fn batch_min_max(data: &[f32]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Nearest-rank percentile pair: (p-th low, p-th high).
fn percentile_range(data: &[f32], p: f32) -> (f32, f32) {
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let hi_rank = ((p as f64 / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let lo_rank = (((100.0 - p as f64) / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    (sorted[lo_rank - 1], sorted[hi_rank - 1])
}
