use alloc::string::String;
use alloc::vec::Vec;

use super::{Grads, Tape};
use crate::error::{bail, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Registry of trainable tensors and their accumulated gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.grads.push(Tensor::zeros(value.dims(), value.kind()));
        self.values.push(value);
        self.names.push(name.into());
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds the gradients of every parameter leaf on `tape` into the store.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Grads) {
        for i in 0..tape.len() {
            let v = super::Var(i);
            if let (Some(id), Some(g)) = (tape.param_of(v), grads.get(v)) {
                for (a, b) in self.grads[id.0].data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    /// Replaces every value with the matching tensor from `other`, checking
    /// names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            bail!(Shape, "checkpoint has {} tensors, model expects {}", other.len(), self.len());
        }
        for i in 0..self.len() {
            if self.names[i] != other.names[i] || !self.values[i].same_shape(&other.values[i]) {
                bail!(
                    Shape,
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    other.names[i],
                    other.values[i].dims(),
                    self.names[i],
                    self.values[i].dims()
                );
            }
        }
        self.values.clone_from(&other.values);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}
