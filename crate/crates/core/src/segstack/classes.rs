use std::ops::RangeInclusive;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const PATHOLOGY_RANGE: RangeInclusive<usize> = 177..=189;
pub const FOREIGN_OBJECT_RANGE: RangeInclusive<usize> = 190..=211;

const DEFAULT_CLASSES_JSON: &str = include_str!("../../data/segmentation_classes.json");

#[derive(Debug, Deserialize)]
struct ClassFile {
    superclasses: Vec<String>,
    classes: Vec<ClassEntry>,
}

#[derive(Debug, Deserialize)]
struct ClassEntry {
    index: usize,
    name: String,
    superclass: String,
}

fn parse_file(json: &str) -> Result<ClassFile> {
    let mut file: ClassFile = serde_json::from_str(json)?;
    file.classes.sort_by_key(|c| c.index);
    for (i, c) in file.classes.iter().enumerate() {
        if c.index != i {
            return Err(Error::Config(format!("class indices not contiguous: expected {i}, found {}", c.index)));
        }
    }
    Ok(file)
}

/// Ordered segmentation class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn default_table() -> Self {
        Self::from_json(DEFAULT_CLASSES_JSON).expect("bundled class table is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file = parse_file(json)?;
        let names: Vec<String> = file.classes.into_iter().map(|c| c.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Config("duplicate class names".into()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Assignment of every class to exactly one superclass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperclassMap {
    superclasses: Vec<String>,
    assignment: Vec<usize>,
}

impl SuperclassMap {
    /// The bundled 20-group map (18 anatomical groups, pathology, foreign objects).
    pub fn default_map() -> Self {
        Self::from_json(DEFAULT_CLASSES_JSON).expect("bundled superclass map is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file = parse_file(json)?;
        let assignment = file
            .classes
            .iter()
            .map(|c| {
                file.superclasses
                    .iter()
                    .position(|s| *s == c.superclass)
                    .ok_or_else(|| Error::Config(format!("class {} maps to unknown superclass {:?}", c.index, c.superclass)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.superclasses, assignment)
    }

    pub fn new(superclasses: Vec<String>, assignment: Vec<usize>) -> Result<Self> {
        if let Some(bad) = assignment.iter().find(|&&s| s >= superclasses.len()) {
            return Err(Error::Config(format!("superclass index {bad} out of range")));
        }
        Ok(Self { superclasses, assignment })
    }

    pub fn n_classes(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_superclasses(&self) -> usize {
        self.superclasses.len()
    }

    pub fn superclass_names(&self) -> &[String] {
        &self.superclasses
    }

    pub fn superclass_of(&self, class: usize) -> Result<usize> {
        self.assignment
            .get(class)
            .copied()
            .ok_or_else(|| Error::Config(format!("class {class} is not mapped to a superclass")))
    }

    pub fn members(&self, superclass: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&c| self.assignment[c] == superclass)
            .collect()
    }

    /// The map for a stack whose class `i` is original class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let assignment = perm.iter().map(|&p| self.superclass_of(p)).collect::<Result<_>>()?;
        Self::new(self.superclasses.clone(), assignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_has_212_unique_names() {
        let t = ClassTable::default_table();
        assert_eq!(t.len(), 212);
        assert_eq!(t.name(0), Some("spine"));
        assert_eq!(t.name(182), Some("Effusion"));
        assert_eq!(t.name(211), Some("Foreign Object"));
        assert_eq!(t.index_of("Pneumothorax"), Some(189));
    }

    #[test]
    fn default_map_shape() {
        let m = SuperclassMap::default_map();
        assert_eq!(m.n_superclasses(), 20);
        assert_eq!(m.n_classes(), 212);
        let names = m.superclass_names();
        let path = m.members(names.iter().position(|s| s == "pathology").unwrap());
        assert_eq!(path, PATHOLOGY_RANGE.collect::<Vec<_>>());
        let fo = m.members(names.iter().position(|s| s == "foreign objects").unwrap());
        assert_eq!(fo, FOREIGN_OBJECT_RANGE.collect::<Vec<_>>());
        let total: usize = (0..20).map(|s| m.members(s).len()).sum();
        assert_eq!(total, 212);
        assert!((0..20).all(|s| !m.members(s).is_empty()));
    }

    #[test]
    fn rejects_gaps_and_unknown_superclasses() {
        let gap = r#"{"superclasses":["a"],"classes":[{"index":0,"name":"x","superclass":"a"},{"index":2,"name":"y","superclass":"a"}]}"#;
        assert!(ClassTable::from_json(gap).is_err());
        let unknown = r#"{"superclasses":["a"],"classes":[{"index":0,"name":"x","superclass":"b"}]}"#;
        assert!(SuperclassMap::from_json(unknown).is_err());
    }
}
