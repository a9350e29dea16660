//! Dense tensors, reverse-mode autodiff, and the Adam optimizer.

pub mod csr;
pub mod init;
pub mod optim;
pub mod state;
pub mod tape;
pub mod tensor;

pub use csr::Csr;
pub use optim::{adam_step, AdamState, OptimConfig};
pub use state::{ModelState, Parameter, StateError};
pub use tape::{BatchNormState, Grads, Tape, Var};
pub use tensor::{Tensor, TensorError};
