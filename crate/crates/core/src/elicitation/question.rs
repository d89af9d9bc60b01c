use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::hierarchy::NodeId;
use crate::{Error, ItemId, Result};

/// Where a question was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionSource {
    /// Uniformly over all items (first iteration, random selection, top-ups).
    Random,
    /// Uniformly over the members of a hierarchy node.
    Node(NodeId),
}

/// A 3AFC question: three distinct items in ascending id order. Equality
/// and hashing only look at the ids.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Question {
    ids: [ItemId; 3],
    pub source: QuestionSource,
}

impl Question {
    pub fn new(a: ItemId, b: ItemId, c: ItemId, source: QuestionSource) -> Result<Self> {
        if a == b || a == c || b == c {
            return Err(Error::InvalidConfig(format!(
                "question ids must be distinct: ({a}, {b}, {c})"
            )));
        }
        let mut ids = [a, b, c];
        ids.sort_unstable();
        Ok(Self { ids, source })
    }

    pub fn ids(&self) -> [ItemId; 3] {
        self.ids
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.ids.contains(&id)
    }

    /// Stable textual id, e.g. `3-17-40`.
    pub fn key(&self) -> String {
        let [a, b, c] = self.ids;
        format!("{a}-{b}-{c}")
    }

    pub fn parse_key(key: &str) -> Option<[ItemId; 3]> {
        let mut parts = key.split('-').map(|p| p.parse::<ItemId>().ok());
        let ids = [parts.next()??, parts.next()??, parts.next()??];
        if parts.next().is_some() {
            return None;
        }
        Question::new(ids[0], ids[1], ids[2], QuestionSource::Random)
            .ok()
            .map(|q| q.ids)
    }
}

impl PartialEq for Question {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

impl Eq for Question {}

impl Hash for Question {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ids.hash(state);
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Leaf cluster of each of a question's three slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub slots: [NodeId; 3],
}

impl Signature {
    /// Order-free form; two questions are similar iff these are equal.
    pub fn key(&self) -> [NodeId; 3] {
        let mut k = self.slots;
        k.sort_unstable();
        k
    }
}

pub fn cluster_signature(question: &Question, leaf_of: &HashMap<ItemId, NodeId>) -> Result<Signature> {
    let mut slots = [0; 3];
    for (slot, id) in slots.iter_mut().zip(question.ids) {
        *slot = *leaf_of.get(&id).ok_or(Error::UnknownItem(id))?;
    }
    Ok(Signature { slots })
}
