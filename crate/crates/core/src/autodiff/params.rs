use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Ordered map of named parameter tensors. Iteration follows insertion
/// order, which makes every downstream consumer (optimizer, checkpoints,
/// counters) deterministic.
#[derive(Clone, Debug)]
pub struct ParamStore<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    trainable: Vec<bool>,
    /// Whether the entry receives decoupled weight decay (gates, biases and
    /// norm scales are registered with decay off).
    decay: Vec<bool>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            trainable: Vec::new(),
            decay: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor<T>,
        trainable: bool,
        decay: bool,
    ) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        self.decay.push(decay);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i])
    }

    pub fn name_at(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.tensors[i]
    }

    pub fn trainable_at(&self, i: usize) -> bool {
        self.trainable[i]
    }

    pub fn decay_at(&self, i: usize) -> bool {
        self.decay[i]
    }

    pub fn trainable(&self, name: &str) -> Option<bool> {
        self.index.get(name).map(|&i| self.trainable[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    /// Total element count across all entries.
    pub fn total_elements(&self) -> u64 {
        self.tensors.iter().map(|t| t.numel() as u64).sum()
    }
}
