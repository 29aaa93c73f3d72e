use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Name-keyed table of interchangeable implementations.
///
/// `T` is usually a factory (`fn(&Cfg) -> Result<Box<dyn Trait>>`) or a
/// boxed trait object; lookups by unknown names report every known key.
pub struct Registry<T> {
    kind: &'static str,
    entries: BTreeMap<&'static str, T>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, item: T) -> &mut Self {
        self.entries.insert(name, item);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).ok_or_else(|| Error::UnknownName {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    /// Consumes the registry, keeping only the entry for `name`.
    pub fn take(mut self, name: &str) -> Result<T> {
        let known = self.names().join(", ");
        self.entries.remove(name).ok_or_else(|| Error::UnknownName {
            kind: self.kind,
            name: name.to_string(),
            known,
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
