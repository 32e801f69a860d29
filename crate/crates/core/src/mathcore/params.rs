use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use super::tensor::{Shape, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::Rng;

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// Registry of named trainable tensors, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter { name: name.to_string(), value });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a tensor drawn uniformly from `[-sqrt(3/d), sqrt(3/d)]`, `d` the fan-in.
    pub fn add_uniform(&mut self, name: &str, shape: Shape, rng: &mut Rng) -> Result<ParamId> {
        self.add(name, uniform_fan_in(shape, rng))
    }

    pub fn add_zeros(&mut self, name: &str, shape: Shape) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Overwrites a parameter by name, keeping its shape.
    pub fn assign(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name).ok_or_else(|| Error::Usage(format!("unknown parameter {name:?}")))?;
        let current = self.get(id).shape();
        if current != value.shape() {
            return Err(shape_err("assign", format!("parameter {name:?} has shape {current}, got {}", value.shape())));
        }
        *self.get_mut(id) = value;
        Ok(())
    }
}

pub fn uniform_fan_in(shape: Shape, rng: &mut Rng) -> Tensor {
    let bound = libm::sqrt(3.0 / shape.fan_in() as f64);
    let values = (0..shape.len()).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, values).expect("shape length matches")
}
