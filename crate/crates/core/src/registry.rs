//! Name-keyed registries of interchangeable strategies.
//!
//! Every pluggable piece of the pipeline (track filters, time-surface
//! aggregators, event file codecs, frame encoders) implements [`Strategy`]
//! and is looked up by name at runtime, so the CLI and config files can
//! select variants without a compile-time enum.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A named, shareable algorithm variant.
pub trait Strategy: Send + Sync {
    /// Canonical registry name.
    fn name(&self) -> &'static str;

    /// Additional names accepted on lookup.
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{name}` (available: {available})")]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

pub struct Registry<T: ?Sized + Strategy> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl<T: ?Sized + Strategy> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    /// Registers a strategy under its name and aliases. A later
    /// registration with the same name replaces the earlier one.
    pub fn register(&mut self, strategy: Arc<T>) -> &mut Self {
        let name = strategy.name();
        for alias in strategy.aliases() {
            self.aliases.insert(alias, name);
        }
        self.entries.insert(name, strategy);
        self
    }

    pub fn with(mut self, strategy: Arc<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        let key = self.aliases.get(name).copied().unwrap_or(name);
        self.entries
            .get(key)
            .cloned()
            .ok_or_else(|| UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_ok()
    }

    /// Canonical names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: ?Sized + Strategy> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}
