//! Fake-quantization: observers, affine quantizers, STE/GC backward rules,
//! degree-aware protection, and learnable bit-widths.

pub mod degree;
pub mod fake;
pub mod observer;
pub mod qat;

use thiserror::Error;

pub use degree::{degree_quant_protect, sample_mask};
pub use fake::{compute_qparams, fake_quant_ref, QuantParams};
pub use observer::{Observer, ObserverKind};
pub use qat::{a2q_train, qat_train, QuantCtx};

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("bits must be 4, 8, or 32 (disabled), got {0}")]
    BadBits(u8),
    #[error("protection probabilities need p_min <= p_max, got ({0}, {1})")]
    BadProtection(f32, f32),
    #[error("mode {0} is not valid for this trainer")]
    BadMode(&'static str),
}

/// Which surrogate gradient the fake-quantizer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardMode {
    /// Straight-through estimator: gradients pass unchanged everywhere.
    Ste,
    /// Gradient clipping: gradients are zeroed where the forward clamp
    /// saturated.
    Gc,
}

impl BackwardMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackwardMode::Ste => "ste",
            BackwardMode::Gc => "gc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    Qat,
    Dq,
    A2q,
}

impl QuantMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuantMode::Qat => "qat",
            QuantMode::Dq => "dq",
            QuantMode::A2q => "a2q",
        }
    }
}

/// Degree-based protection probabilities for DQ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqConfig {
    pub p_min: f32,
    pub p_max: f32,
}

impl Default for DqConfig {
    fn default() -> Self {
        Self {
            p_min: 0.0,
            p_max: 0.1,
        }
    }
}

/// Learnable bit-width state: β per quantized tensor, memory penalty λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2qState {
    pub lambda_mem: f32,
    pub init_bits: f32,
    /// Freeze β (no gradient updates); with λ=0 this reduces to fixed-bit QAT.
    pub freeze_bits: bool,
}

impl Default for A2qState {
    fn default() -> Self {
        Self {
            lambda_mem: 0.01,
            init_bits: 4.0,
            freeze_bits: false,
        }
    }
}

/// Full quantization-training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantConfig {
    pub mode: QuantMode,
    /// 4 or 8; 32 disables quantization entirely. Ignored by A2Q.
    pub bits: u8,
    pub backward: BackwardMode,
    pub observer: ObserverKind,
    pub dq: DqConfig,
    pub a2q: A2qState,
    /// Weight quantization toggle; activations-only when false.
    pub quantize_weights: bool,
}

impl QuantConfig {
    pub fn qat(bits: u8) -> Self {
        Self {
            mode: QuantMode::Qat,
            bits,
            backward: BackwardMode::Ste,
            observer: ObserverKind::Abs,
            dq: DqConfig::default(),
            a2q: A2qState::default(),
            quantize_weights: true,
        }
    }

    pub fn dq(bits: u8) -> Self {
        Self {
            mode: QuantMode::Dq,
            ..Self::qat(bits)
        }
    }

    pub fn a2q(lambda_mem: f32) -> Self {
        Self {
            mode: QuantMode::A2q,
            a2q: A2qState {
                lambda_mem,
                ..A2qState::default()
            },
            ..Self::qat(4)
        }
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        if !matches!(self.bits, 4 | 8 | 32) {
            return Err(QuantError::BadBits(self.bits));
        }
        if self.dq.p_min > self.dq.p_max {
            return Err(QuantError::BadProtection(self.dq.p_min, self.dq.p_max));
        }
        Ok(())
    }

    pub fn disabled(&self) -> bool {
        self.mode != QuantMode::A2q && self.bits == 32
    }

    /// Config string for bench records, e.g. `qat-int8-ste-abs`.
    pub fn label(&self) -> String {
        match self.mode {
            QuantMode::A2q => format!("a2q-l{}", self.a2q.lambda_mem),
            m => format!(
                "{}-int{}-{}-{}",
                m.as_str(),
                self.bits,
                self.backward.as_str(),
                self.observer.as_str()
            ),
        }
    }
}
