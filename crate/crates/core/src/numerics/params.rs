use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{bail, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            bail!(Contract, "parameter `{}` registered twice", name);
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor.with_requires_grad(true));
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds the gradients from one backward pass onto the stored ones.
    pub fn accumulate(&mut self, grads: &super::Gradients) -> Result<()> {
        for (id, g) in &grads.0 {
            let t = self.get_mut(*id);
            if t.requires_grad() {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Replaces the values of `name`, keeping its shape.
    pub fn assign(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let Some(id) = self.id(name) else {
            bail!(Compatibility, "unknown parameter `{}`", name);
        };
        let t = &mut self.tensors[id.0];
        if t.shape() != shape {
            bail!(
                Compatibility,
                "parameter `{}` has shape {:?}, stored blob has {:?}",
                name,
                t.shape(),
                shape
            );
        }
        t.values_mut().copy_from_slice(&values);
        Ok(())
    }

    /// Name of the first parameter holding a non-finite value, or failing
    /// that, the first with a non-finite gradient.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter()
            .find(|(_, t)| !t.is_finite())
            .or_else(|| {
                self.iter()
                    .find(|(_, t)| t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
            })
            .map(|(n, _)| n)
    }
}
