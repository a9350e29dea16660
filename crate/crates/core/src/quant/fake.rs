//! Affine fake quantization and its tape ops.

use std::sync::Arc;

use crate::nn::tape::{slot, Grads, Tape, Var};
use crate::nn::Tensor;

use super::BackwardMode;

/// Affine quantizer parameters: x̂ = (clamp(round(x/s)+z, qmin, qmax) − z)·s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
    pub bits: u8,
}

/// Derives quantizer parameters from an observed range.
///
/// Asymmetric: s=(hi−lo)/(2ᵇ−1) over [0, 2ᵇ−1]. Symmetric:
/// s=max(|lo|,|hi|)/(2ᵇ⁻¹−1), zero point 0, over [−2ᵇ⁻¹, 2ᵇ⁻¹−1].
/// A degenerate range is widened by 1e-8 per side.
pub fn compute_qparams(range: (f32, f32), bits: u8, symmetric: bool) -> QuantParams {
    let (mut lo, mut hi) = (range.0 as f64, range.1 as f64);
    debug_assert!(lo <= hi, "invalid range ({lo}, {hi})");
    if lo == hi {
        lo -= 1e-8;
        hi += 1e-8;
    }
    let levels = (1u64 << bits) as f64 - 1.0;
    if symmetric {
        let qmax = (1i64 << (bits - 1)) - 1;
        let qmin = -(1i64 << (bits - 1));
        let bound = lo.abs().max(hi.abs());
        let scale = (bound / qmax as f64).max(f64::MIN_POSITIVE) as f32;
        QuantParams {
            scale,
            zero_point: 0,
            qmin: qmin as i32,
            qmax: qmax as i32,
            bits,
        }
    } else {
        let qmin = 0i64;
        let qmax = (1i64 << bits) - 1;
        let scale = ((hi - lo) / levels).max(f64::MIN_POSITIVE);
        let z = (qmin as f64 - lo / scale).round();
        let zero_point = (z as i64).clamp(qmin, qmax) as i32;
        QuantParams {
            scale: scale as f32,
            zero_point,
            qmin: qmin as i32,
            qmax: qmax as i32,
            bits,
        }
    }
}

/// Scalar fake-quant forward; returns (x̂, saturated).
#[inline]
pub fn fake_quant_ref(x: f32, qp: &QuantParams) -> (f32, bool) {
    let q = (x / qp.scale).round() + qp.zero_point as f32;
    let saturated = q < qp.qmin as f32 || q > qp.qmax as f32;
    let qc = q.clamp(qp.qmin as f32, qp.qmax as f32);
    ((qc - qp.zero_point as f32) * qp.scale, saturated)
}

impl Tape {
    /// Fake-quantizes every element of x. STE passes gradients through
    /// unchanged; GC zeroes them where the forward clamp saturated.
    pub fn fake_quant(&mut self, x: Var, qp: QuantParams, mode: BackwardMode) -> Var {
        let tx = self.value(x);
        let len = tx.len();
        let shape = tx.shape().to_vec();
        let mut out = Vec::with_capacity(len);
        let mut saturated = vec![false; len];
        for (i, &v) in tx.data().iter().enumerate() {
            let (q, sat) = fake_quant_ref(v, &qp);
            out.push(q);
            saturated[i] = sat;
        }
        let back = move |dy: &[f32], _values: &[Tensor], grads: &mut Grads| {
            let g = slot(grads, x.0, len);
            match mode {
                BackwardMode::Ste => {
                    for (gi, &d) in g.iter_mut().zip(dy) {
                        *gi += d;
                    }
                }
                BackwardMode::Gc => {
                    for ((gi, &d), &sat) in g.iter_mut().zip(dy).zip(&saturated) {
                        if !sat {
                            *gi += d;
                        }
                    }
                }
            }
        };
        self.push_node(Tensor::new(shape, out).unwrap(), Box::new(back))
    }

    /// Row-protected fake quantization: rows with `protect[r] == true` pass
    /// through untouched (gradient included); the rest quantize as usual.
    pub fn fake_quant_rows(
        &mut self,
        x: Var,
        qp: QuantParams,
        mode: BackwardMode,
        protect: Arc<Vec<bool>>,
    ) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        debug_assert_eq!(protect.len(), n, "protection mask length mismatch");
        let len = n * d;
        let shape = tx.shape().to_vec();
        let mut out = Vec::with_capacity(len);
        let mut saturated = vec![false; len];
        for r in 0..n {
            let row = &tx.data()[r * d..(r + 1) * d];
            if protect[r] {
                out.extend_from_slice(row);
            } else {
                for (j, &v) in row.iter().enumerate() {
                    let (q, sat) = fake_quant_ref(v, &qp);
                    out.push(q);
                    saturated[r * d + j] = sat;
                }
            }
        }
        let back = move |dy: &[f32], _values: &[Tensor], grads: &mut Grads| {
            let g = slot(grads, x.0, len);
            for r in 0..n {
                for j in 0..d {
                    let i = r * d + j;
                    let pass = protect[r]
                        || match mode {
                            BackwardMode::Ste => true,
                            BackwardMode::Gc => !saturated[i],
                        };
                    if pass {
                        g[i] += dy[i];
                    }
                }
            }
        };
        self.push_node(Tensor::new(shape, out).unwrap(), Box::new(back))
    }

    /// Fake quantization with a learnable bit parameter β (scalar Var).
    /// Effective bits are round(clamp(β, 2, 8)); the bit gradient flows via a
    /// straight-through surrogate through the scale: in-range elements
    /// contribute (x̂−x)/s · ds/db and saturated ones x̂/s · ds/db.
    pub fn fake_quant_learnable(
        &mut self,
        x: Var,
        beta: Var,
        range: (f32, f32),
        symmetric: bool,
        mode: BackwardMode,
    ) -> Var {
        let beta_val = self.value(beta).scalar_value();
        let bits = effective_bits(beta_val);
        let qp = compute_qparams(range, bits, symmetric);
        let tx = self.value(x);
        let len = tx.len();
        let shape = tx.shape().to_vec();
        let mut out = Vec::with_capacity(len);
        let mut saturated = vec![false; len];
        for (i, &v) in tx.data().iter().enumerate() {
            let (q, sat) = fake_quant_ref(v, &qp);
            out.push(q);
            saturated[i] = sat;
        }
        // ds/db at integer bit count b
        let ds_db = scale_bit_derivative(&qp, symmetric);
        let out_copy = out.clone();
        let back = move |dy: &[f32], values: &[Tensor], grads: &mut Grads| {
            {
                let g = slot(grads, x.0, len);
                match mode {
                    BackwardMode::Ste => {
                        for (gi, &d) in g.iter_mut().zip(dy) {
                            *gi += d;
                        }
                    }
                    BackwardMode::Gc => {
                        for ((gi, &d), &sat) in g.iter_mut().zip(dy).zip(&saturated) {
                            if !sat {
                                *gi += d;
                            }
                        }
                    }
                }
            }
            // dβ: straight-through round(β), then through the scale
            let xd = values[x.0].data();
            let mut acc = 0.0f64;
            for i in 0..len {
                let dxds = if saturated[i] {
                    out_copy[i] / qp.scale
                } else {
                    (out_copy[i] - xd[i]) / qp.scale
                };
                acc += dy[i] as f64 * dxds as f64 * ds_db as f64;
            }
            let g = slot(grads, beta.0, 1);
            g[0] += acc as f32;
        };
        self.push_node(Tensor::new(shape, out).unwrap(), Box::new(back))
    }
}

/// round(clamp(β, 2, 8)) as the integer bit count.
pub fn effective_bits(beta: f32) -> u8 {
    beta.clamp(2.0, 8.0).round() as u8
}

fn scale_bit_derivative(qp: &QuantParams, symmetric: bool) -> f32 {
    let ln2 = std::f64::consts::LN_2;
    let b = qp.bits as i32;
    if symmetric {
        // s = m / (2^{b-1} - 1)
        let half = (1i64 << (b - 1)) as f64;
        (-(qp.scale as f64) * ln2 * half / (half - 1.0)) as f32
    } else {
        // s = (hi - lo) / (2^b - 1)
        let full = (1i64 << b) as f64;
        (-(qp.scale as f64) * ln2 * full / (full - 1.0)) as f32
    }
}
