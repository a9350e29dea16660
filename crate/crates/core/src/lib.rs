//! Graph neural network compression toolkit.
//!
//! Dataset parsers, a small autodiff engine, GCN/GIN/GAE task models, and the
//! compression machinery around them: magnitude pruning (global and
//! layer-wise), L2-regularization sweeps, lottery-ticket retraining,
//! quantization-aware training (QAT, degree-aware, learnable bit-widths), and
//! a lossless sparse checkpoint codec.

pub mod ckpt;
pub mod data;
pub mod models;
pub mod nn;
pub mod prune;
pub mod quant;

pub use data::{Dataset, Graph, Split, Task};
pub use nn::{ModelState, OptimConfig, Parameter, Tensor};
