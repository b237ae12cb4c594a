use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Repository, Result, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(String);

impl ContextId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A set of independent context repositories with one active selection.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    contexts: IndexMap<ContextId, Repository>,
    active: Option<ContextId>,
    next_id: u64,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Workspace holding one context, already active.
    pub fn with_repository(repo: Repository) -> Self {
        let mut ws = Self::new();
        ws.insert(repo);
        ws
    }

    /// Creates an empty context and makes it active.
    pub fn create_context(&mut self) -> ContextId {
        self.insert(Repository::new())
    }

    /// Adds an existing repository and makes it active.
    pub fn insert(&mut self, repo: Repository) -> ContextId {
        let id = ContextId(format!("ctx-{}", self.next_id));
        self.next_id += 1;
        self.contexts.insert(id.clone(), repo);
        self.active = Some(id.clone());
        id
    }

    pub fn set_active(&mut self, id: &str) -> Result<()> {
        let key = ContextId::new(id);
        if !self.contexts.contains_key(&key) {
            return Err(StoreError::UnknownContext(id.to_string()));
        }
        self.active = Some(key);
        Ok(())
    }

    pub fn active_id(&self) -> Option<&ContextId> {
        self.active.as_ref()
    }

    pub fn active(&self) -> Result<&Repository> {
        self.active
            .as_ref()
            .and_then(|id| self.contexts.get(id))
            .ok_or(StoreError::NoActiveContext)
    }

    pub fn active_mut(&mut self) -> Result<&mut Repository> {
        match &self.active {
            Some(id) => self.contexts.get_mut(id).ok_or(StoreError::NoActiveContext),
            None => Err(StoreError::NoActiveContext),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Repository> {
        self.contexts.get(&ContextId::new(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = &ContextId> {
        self.contexts.keys()
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Removes and returns the repository of a context.
    pub fn take(&mut self, id: &str) -> Option<Repository> {
        let key = ContextId::new(id);
        let repo = self.contexts.shift_remove(&key);
        if self.active.as_ref() == Some(&key) {
            self.active = None;
        }
        repo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Source;

    #[test]
    fn create_context_activates_it() {
        let mut ws = Workspace::new();
        assert!(matches!(ws.active(), Err(StoreError::NoActiveContext)));
        let a = ws.create_context();
        let b = ws.create_context();
        assert_ne!(a, b);
        assert_eq!(ws.active_id(), Some(&b));
        ws.set_active(a.as_str()).unwrap();
        assert_eq!(ws.active_id(), Some(&a));
        assert!(ws.set_active("ctx-99").is_err());
    }

    #[test]
    fn contexts_are_independent() {
        let mut ws = Workspace::new();
        let a = ws.create_context();
        ws.active_mut()
            .unwrap()
            .add_resource("only in a", "s", Source::Web)
            .unwrap();
        ws.create_context();
        assert!(ws.active().unwrap().resources().is_empty());
        assert_eq!(ws.get(a.as_str()).unwrap().resources().len(), 1);
    }
}
