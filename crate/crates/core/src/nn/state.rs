//! Named parameters and ordered model state.

use std::collections::BTreeMap;

use thiserror::Error;

use super::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("unknown parameter name `{0}`")]
    UnknownName(String),
    #[error("shape mismatch for `{name}`: {expected:?} vs {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

/// A named, trainable tensor. `prunable` marks weight matrices; biases and
/// norm parameters stay dense. When a mask is present, `data[i] == 0` holds
/// wherever `mask[i]` is false, except inside an optimizer step.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub prunable: bool,
    pub mask: Option<Vec<bool>>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor, prunable: bool) -> Self {
        Self {
            name: name.into(),
            tensor,
            prunable,
            mask: None,
        }
    }

    /// Re-applies the stored mask, pinning pruned entries to zero.
    pub fn enforce_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (v, &keep) in self.tensor.data_mut().iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Ordered name → tensor map; iteration order equals registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelState {
    entries: Vec<(String, Tensor)>,
    pub metadata: BTreeMap<String, String>,
}

impl ModelState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), StateError> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(StateError::DuplicateName(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count across all tensors.
    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl FromIterator<(String, Tensor)> for ModelState {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        let mut s = Self::new();
        for (n, t) in iter {
            s.insert(n, t).expect("duplicate name in ModelState literal");
        }
        s
    }
}
