//! Learnable weights addressed by layer path (`enc0.res.conv1.weight`, ...).

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParameterSet`].
pub type ParamId = usize;

/// Ordered map from layer path to weight tensor. Insertion order is stable,
/// so a `ParamId` stays valid for every set built from the same layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::DuplicateName { kind: "parameter", name: path });
        }
        Ok(self.entries.insert_full(path, value).0)
    }

    pub fn id(&self, path: &str) -> Result<ParamId> {
        self.entries.get_index_of(path).ok_or_else(|| {
            Error::Shape(format!("parameter `{path}` is missing from the parameter set"))
        })
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.entries.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(path)
    }

    pub fn by_id(&self, id: ParamId) -> &Tensor {
        &self.entries[id]
    }

    pub fn by_id_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Same layout, every entry zeroed. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.entries.values_mut().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.entries.values_mut().for_each(|t| t.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// Checks that `other` has exactly the same paths, order and shapes.
    pub fn ensure_same_layout(&self, other: &ParameterSet) -> Result<()> {
        let mut problems = Vec::new();
        for (path, t) in &self.entries {
            match other.entries.get(path) {
                None => problems.push(format!("missing parameter `{path}`")),
                Some(o) if o.shape() != t.shape() => problems.push(format!(
                    "parameter `{path}` has shape {:?}, expected {:?}",
                    o.shape(),
                    t.shape()
                )),
                Some(_) => {}
            }
        }
        for path in other.entries.keys() {
            if !self.entries.contains_key(path) {
                problems.push(format!("unexpected parameter `{path}`"));
            }
        }
        if problems.is_empty() && self.entries.keys().ne(other.entries.keys()) {
            problems.push("parameter order differs".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_insertion_order() {
        let mut p = ParameterSet::new();
        assert_eq!(p.insert("a", Tensor::zeros(&[2])).unwrap(), 0);
        assert_eq!(p.insert("b", Tensor::zeros(&[3, 1])).unwrap(), 1);
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(p.id("b").unwrap(), 1);
        assert!(p.id("c").is_err());
        assert_eq!(p.num_scalars(), 5);
    }

    #[test]
    fn layout_check_reports_every_problem() {
        let mut a = ParameterSet::new();
        a.insert("w", Tensor::zeros(&[2])).unwrap();
        a.insert("v", Tensor::zeros(&[2])).unwrap();
        let mut b = ParameterSet::new();
        b.insert("w", Tensor::zeros(&[3])).unwrap();
        b.insert("u", Tensor::zeros(&[2])).unwrap();
        let msg = a.ensure_same_layout(&b).unwrap_err().to_string();
        assert!(msg.contains("`w` has shape"));
        assert!(msg.contains("missing parameter `v`"));
        assert!(msg.contains("unexpected parameter `u`"));
        assert!(a.ensure_same_layout(&a.zeros_like()).is_ok());
    }
}
