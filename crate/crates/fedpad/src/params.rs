//! Named, ordered parameter collections with an invariant/specific partition.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use indexmap::IndexMap;

/// Which half of the model a parameter belongs to.
///
/// Invariant parameters are shared with the server in invariant-only
/// aggregation; specific parameters never leave their data center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Invariant,
    Specific,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub partition: Partition,
}

/// Ordered map name -> parameter tensor. Iteration order is insertion order
/// and therefore deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: IndexMap<String, ParamEntry>,
}

/// Gradients keyed like a ParameterSet.
pub type Gradients = IndexMap<String, Tensor>;

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, partition: Partition) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::ParameterSet(format!("duplicate name {name}")));
        }
        self.entries
            .insert(name.to_string(), ParamEntry { tensor, partition });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.tensor)
    }

    pub fn partition_of(&self, name: &str) -> Option<Partition> {
        self.entries.get(name).map(|e| e.partition)
    }

    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::ParameterSet(format!("unknown name {name}")))?;
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::Dimension {
                op: format!("set {name}"),
                lhs: entry.tensor.shape().to_vec(),
                rhs: tensor.shape().to_vec(),
            });
        }
        entry.tensor = tensor;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    /// Entries of one partition, order preserved.
    pub fn filter(&self, partition: Partition) -> ParameterSet {
        let entries = self
            .entries
            .iter()
            .filter(|(_, e)| e.partition == partition)
            .map(|(k, e)| (k.clone(), e.clone()))
            .collect();
        ParameterSet { entries }
    }

    /// Entries whose names start with any of the given prefixes.
    pub fn filter_prefixes(&self, prefixes: &[&str]) -> ParameterSet {
        let entries = self
            .entries
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, e)| (k.clone(), e.clone()))
            .collect();
        ParameterSet { entries }
    }

    /// Overwrite entries present in `other`, keeping the rest.
    /// Errors if `other` has keys or shapes this set does not know.
    pub fn load(&mut self, other: &ParameterSet) -> Result<()> {
        for (name, entry) in other.iter() {
            if self.entries.get(name).is_none() {
                return Err(Error::Version(format!("unknown parameter {name}")));
            }
            self.set(name, entry.tensor.clone())?;
        }
        Ok(())
    }

    /// Checks that both sets have identical key sets and shapes.
    pub fn same_schema(&self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Version(format!(
                "entry count {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (name, entry) in self.iter() {
            match other.get(name) {
                Some(t) if t.shape() == entry.tensor.shape() => {}
                Some(t) => {
                    return Err(Error::Dimension {
                        op: format!("schema {name}"),
                        lhs: entry.tensor.shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    })
                }
                None => return Err(Error::Version(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }
}
