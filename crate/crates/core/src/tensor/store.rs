use indexmap::IndexMap;

use super::Tensor;
use crate::error::{Error, Result};

/// A named parameter with its accumulated gradient. `grad` stays `None` until
/// a backward pass touches the parameter.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
}

/// Insertion-ordered parameter map. Iteration order is the order parameters
/// were registered, which fixes checkpoint layout and optimizer traversal.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{}`", name)));
        }
        self.entries.insert(
            name,
            Param {
                value,
                grad: None,
                trainable: true,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Checkpoint(vec![name.to_string()]))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_parameters(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    /// Marks every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for (name, p) in self.entries.iter_mut() {
            if name.starts_with(prefix) {
                p.trainable = trainable;
            }
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(vec![name.to_string()]))?;
        if grad.len() != p.value.len() {
            return Err(Error::shape(
                "accumulate_grad",
                format!(
                    "{} expects {} values, got {}",
                    name,
                    p.value.len(),
                    grad.len()
                ),
            ));
        }
        match &mut p.grad {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(grad) {
                    *a += b;
                }
            }
            None => {
                p.grad = Some(Tensor::new(p.value.shape().to_vec(), grad.to_vec())?);
            }
        }
        Ok(())
    }

    /// Copies values of every parameter whose name matches one of
    /// `required_prefixes` out of `other`. Fails listing all names `other` lacks.
    pub fn load_from(&mut self, other: &ParamStore, required_prefixes: &[&str]) -> Result<()> {
        let mut missing = Vec::new();
        for (name, p) in self.entries.iter_mut() {
            let needed = required_prefixes.iter().any(|pre| name.starts_with(pre));
            if !needed {
                continue;
            }
            match other.entries.get(name) {
                Some(src) if src.value.shape() == p.value.shape() => {
                    p.value = src.value.clone();
                }
                Some(src) => {
                    return Err(Error::shape(
                        "load_from",
                        format!("{}: {:?} vs {:?}", name, src.value.shape(), p.value.shape()),
                    ))
                }
                None => missing.push(name.clone()),
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(missing))
        }
    }
}
