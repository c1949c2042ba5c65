//! Name-keyed registries of interchangeable strategies (loss functions,
//! interpolation kernels). Entries keep registration order so listings and
//! error messages are stable.

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Registry<T> {
    kind: &'static str,
    entries: IndexMap<String, T>,
}

impl<T> Registry<T> {
    /// Empty registry; `kind` names the strategy family in error messages.
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: IndexMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, entry: T) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName { kind: self.kind, name });
        }
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).ok_or_else(|| Error::UnknownName {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
