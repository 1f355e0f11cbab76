use std::collections::BTreeMap;

use super::TensorF;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: TensorF,
    pub trainable: bool,
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, TensorF>;

/// Named parameter tensors with per-parameter trainable flags. Iteration order
/// is the lexicographic order of names, which keeps serialization and
/// reductions deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: TensorF) {
        self.entries.insert(name.into(), Param { value, trainable: true });
    }

    pub fn insert_param(&mut self, name: impl Into<String>, param: Param) {
        self.entries.insert(name.into(), param);
    }

    pub fn get(&self, name: &str) -> Result<&TensorF> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut TensorF> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.entries.remove(name)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.entries
            .get_mut(name)
            .map(|p| p.trainable = trainable)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.entries.values_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|p| p.trainable)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
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

    pub fn num_elements(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    /// Merge `other` in, prefixing each name.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamStore) {
        for (k, p) in other.iter() {
            self.entries.insert(format!("{prefix}{k}"), p.clone());
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix stripped.
    pub fn strip_prefix(&self, prefix: &str) -> ParamStore {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, p)| k.strip_prefix(prefix).map(|s| (s.to_string(), p.clone())))
            .collect();
        ParamStore { entries }
    }
}

/// Element-wise sum of per-sample gradient maps, in order.
pub fn sum_grads(maps: Vec<GradMap>) -> GradMap {
    let mut iter = maps.into_iter();
    let Some(mut total) = iter.next() else {
        return GradMap::new();
    };
    for m in iter {
        for (k, g) in m {
            match total.get_mut(&k) {
                Some(t) => t.add_assign(&g),
                None => {
                    total.insert(k, g);
                }
            }
        }
    }
    total
}
