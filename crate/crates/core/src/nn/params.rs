use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// One named parameter with its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Buffers such as running statistics are stored but never optimized.
    pub trainable: bool,
}

/// Ordered collection of named parameters (the `LayerParams` of a model).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::param(format!("duplicate parameter name `{name}`")));
        }
        let id = self.params.len();
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::param(format!("unknown parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.params[self.id(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let id = self.id(name)?;
        Ok(&mut self.params[id].value)
    }

    pub fn grad_of(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.params[self.id(name)?].grad)
    }

    #[inline]
    pub fn param(&self, id: usize) -> &Param<T> {
        &self.params[id]
    }

    #[inline]
    pub fn param_mut(&mut self, id: usize) -> &mut Param<T> {
        &mut self.params[id]
    }

    #[inline]
    pub fn value(&self, id: usize) -> &[T] {
        self.params[id].value.data()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Number of scalar values across trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    trainable: p.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Tensor values as little-endian `f32` bytes.
pub fn to_f32_le_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * 4);
    for &v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn from_f32_le_bytes<T: Scalar>(shape: Vec<usize>, bytes: &[u8]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::format(format!(
            "expected {} bytes for shape {shape:?}, got {}",
            n * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::new(shape, data)
}
