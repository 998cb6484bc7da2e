use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Named trainable arrays. Iteration order is the lexicographic name order,
/// which is also the order used by checkpoints and optimizers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new entry. Rejects duplicate names and non-finite values.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::Training(format!("parameter `{name}` has non-finite values")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub(crate) fn insert_unchecked(&mut self, name: String, value: Tensor) {
        self.entries.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
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

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn shape_of(&self, name: &str) -> Option<[usize; 2]> {
        self.entries.get(name).map(|t| [t.rows(), t.cols()])
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    /// Same names with the same shapes.
    pub fn is_congruent(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// Concatenation of all values in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Entries whose names start with `prefix`, with the prefix stripped.
    pub fn subset(&self, prefix: &str) -> ParameterSet {
        Self {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Moves every entry of `other` in under `prefix`.
    pub fn absorb(&mut self, prefix: &str, other: ParameterSet) -> Result<()> {
        for (k, v) in other.entries {
            self.insert(format!("{prefix}{k}"), v)?;
        }
        Ok(())
    }

    /// `self ← (1 − τ)·self + τ·online`, elementwise.
    pub fn polyak_from(&mut self, online: &ParameterSet, tau: f64) -> Result<()> {
        if !self.is_congruent(online) {
            return Err(Error::Shape("polyak update between incongruent parameter sets".into()));
        }
        for (t, o) in self.entries.values_mut().zip(online.entries.values()) {
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
        Ok(())
    }
}
