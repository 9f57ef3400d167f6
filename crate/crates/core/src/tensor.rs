//! Real tensors, the named parameter store and gradient buffers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub group: String,
    pub name: String,
    pub tensor: RealTensor,
}

/// Owns every trainable tensor. Layers keep [`ParamId`] handles into it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<(String, String), ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, group: &str, name: &str, tensor: RealTensor) -> Result<ParamId> {
        let key = (group.to_string(), name.to_string());
        if self.index.contains_key(&key) {
            return Err(Error::Contract(format!(
                "parameter {group}/{name} registered twice"
            )));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            group: key.0.clone(),
            name: key.1.clone(),
            tensor,
        });
        self.index.insert(key, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn lookup(&self, group: &str, name: &str) -> Option<ParamId> {
        self.index
            .get(&(group.to_string(), name.to_string()))
            .copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &RealTensor {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut RealTensor {
        &mut self.params[id.0].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.params {
            if !out.contains(&p.group.as_str()) {
                out.push(&p.group);
            }
        }
        out
    }
}

/// One gradient vector per registered parameter, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.params.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn accumulate(&mut self, other: &GradBuffer) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::Contract("gradient buffers of different stores".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Checks that every parameter in `store` has a same-sized gradient.
    pub fn check_matches(&self, store: &ParamStore) -> Result<()> {
        if self.grads.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                self.grads.len(),
                store.len()
            )));
        }
        for ((_, p), g) in store.iter().zip(&self.grads) {
            if g.len() != p.tensor.len() {
                return Err(Error::Contract(format!(
                    "missing gradient entries for {}/{}",
                    p.group, p.name
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_checked() {
        assert!(RealTensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            RealTensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut store = ParamStore::new();
        store.register("g", "w", RealTensor::zeros(vec![2])).unwrap();
        assert!(store.register("g", "w", RealTensor::zeros(vec![2])).is_err());
        assert!(store.register("h", "w", RealTensor::zeros(vec![2])).is_ok());
        assert_eq!(store.groups(), vec!["g", "h"]);
    }

    #[test]
    fn grad_buffer_mismatch_is_contract_error() {
        let mut a = ParamStore::new();
        a.register("g", "w", RealTensor::zeros(vec![2])).unwrap();
        let b = ParamStore::new();
        let grads = GradBuffer::zeros_like(&b);
        assert!(matches!(grads.check_matches(&a), Err(Error::Contract(_))));
    }
}
