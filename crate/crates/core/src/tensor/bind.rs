use std::collections::BTreeMap;

use super::params::{GradMap, ParamStore};
use super::tape::{Grads, Tape, Var};
use crate::error::{Error, Result};

/// Lazily places named parameters on a tape, so a graph only carries the
/// parameters it touches. Trainable entries become gradient leaves.
pub struct Binder<'s> {
    store: Option<&'s ParamStore>,
    track_grads: bool,
    vars: BTreeMap<String, Var>,
}

impl<'s> Binder<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store: Some(store), track_grads: true, vars: BTreeMap::new() }
    }

    /// Forward-only binding: every parameter is a constant.
    pub fn frozen(store: &'s ParamStore) -> Self {
        Self { store: Some(store), track_grads: false, vars: BTreeMap::new() }
    }

    /// Binding over vars that are already on the tape.
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        let vars = names.iter().cloned().zip(vars.iter().copied()).collect();
        Self { store: None, track_grads: true, vars }
    }

    pub fn var(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let store = self
            .store
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))?;
        let p = store
            .param(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))?;
        let v = tape.leaf(p.value.clone(), self.track_grads && p.trainable);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Gradients of every bound trainable parameter.
    pub fn grads(&self, grads: &mut Grads) -> GradMap {
        let mut out = GradMap::new();
        for (name, &v) in &self.vars {
            let trainable = self.store.is_none_or(|s| s.is_trainable(name));
            if trainable {
                if let Some(g) = grads.take(v) {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}
