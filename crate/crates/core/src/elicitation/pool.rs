use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::question::{cluster_signature, Question, QuestionSource};
use crate::hierarchy::{HierarchyTree, NodeId};
use crate::{Error, ItemId, Result};

/// One answered question. Serialized as a flat JSON object, one per line in
/// pool files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub a1: ItemId,
    pub a2: ItemId,
    pub a3: ItemId,
    pub chosen: ItemId,
    pub responder: String,
    pub margin: f64,
    pub iteration: usize,
    /// Milliseconds since the Unix epoch for live sessions; 0 in simulations.
    pub timestamp: u64,
    #[serde(default = "random_source")]
    pub source: QuestionSource,
}

fn random_source() -> QuestionSource {
    QuestionSource::Random
}

impl AnswerRecord {
    pub fn new(
        question: &Question,
        chosen: ItemId,
        responder: impl Into<String>,
        margin: f64,
        iteration: usize,
    ) -> Result<Self> {
        if !question.contains(chosen) {
            let [a1, a2, a3] = question.ids();
            return Err(Error::InvalidConfig(format!(
                "chosen item {chosen} is not one of {a1}, {a2}, {a3}"
            )));
        }
        let [a1, a2, a3] = question.ids();
        Ok(Self {
            a1,
            a2,
            a3,
            chosen,
            responder: responder.into(),
            margin,
            iteration,
            timestamp: 0,
            source: question.source,
        })
    }

    pub fn question(&self) -> Question {
        let mut q = Question::new(self.a1, self.a2, self.a3, self.source)
            .expect("records hold valid questions");
        q.source = self.source;
        q
    }

    /// The two items not chosen, in ascending id order.
    pub fn positives(&self) -> [ItemId; 2] {
        let mut rest = [self.a1, self.a2, self.a3].into_iter().filter(|&i| i != self.chosen);
        [rest.next().unwrap(), rest.next().unwrap()]
    }

    fn validate(&self) -> Result<()> {
        let q = Question::new(self.a1, self.a2, self.a3, self.source)?;
        if !q.contains(self.chosen) {
            return Err(Error::InvalidConfig(format!(
                "record chooses {} outside its question",
                self.chosen
            )));
        }
        Ok(())
    }
}

/// Append-only set of answered questions, at most one answer per
/// (question, responder).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgePool {
    records: Vec<AnswerRecord>,
    answered: HashSet<([ItemId; 3], String)>,
}

impl KnowledgePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[AnswerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, question: &Question, responder: &str) -> bool {
        self.answered
            .contains(&(question.ids(), responder.to_string()))
    }

    /// Adds a record; returns `false` (and changes nothing) when the
    /// responder already answered that question.
    pub fn add(&mut self, record: AnswerRecord) -> Result<bool> {
        record.validate()?;
        let key = (record.question().ids(), record.responder.clone());
        if !self.answered.insert(key) {
            return Ok(false);
        }
        self.records.push(record);
        Ok(true)
    }

    /// Questions already answered by `responder`.
    pub fn answered_by(&self, responder: &str) -> HashSet<[ItemId; 3]> {
        self.records
            .iter()
            .filter(|r| r.responder == responder)
            .map(|r| r.question().ids())
            .collect()
    }

    /// Union of several pools; duplicates (same question and responder) are
    /// dropped.
    pub fn merged<'a>(pools: impl IntoIterator<Item = &'a KnowledgePool>) -> Self {
        let mut out = Self::new();
        for pool in pools {
            for r in &pool.records {
                out.add(r.clone()).expect("records were validated on insert");
            }
        }
        out
    }

    /// Appends one record to a JSON-lines file and syncs it to disk.
    pub fn append_jsonl(path: &Path, record: &AnswerRecord) -> Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path)?;
        for r in &self.records {
            serde_json::to_writer(&mut file, r)?;
            file.write_all(b"\n")?;
        }
        file.sync_all()?;
        Ok(())
    }

    /// Loads a JSON-lines pool. A truncated final line (from an interrupted
    /// write) is ignored; malformed lines elsewhere are errors.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let mut pool = Self::new();
        if !path.exists() {
            return Ok(pool);
        }
        let lines: Vec<String> = BufReader::new(File::open(path)?)
            .lines()
            .collect::<std::io::Result<_>>()?;
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<AnswerRecord>(line) {
                Ok(r) => {
                    pool.add(r)?;
                }
                Err(_) if i == last => break,
                Err(e) => {
                    return Err(Error::MalformedRow {
                        row: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(pool)
    }

    /// Indexes the pool by cluster signature under `tree`.
    pub fn index(&self, tree: &HierarchyTree) -> Result<SignatureIndex> {
        let leaf_of = tree.leaf_of();
        let mut tallies: HashMap<[NodeId; 3], BTreeMap<NodeId, u64>> = HashMap::new();
        for r in &self.records {
            let sig = cluster_signature(&r.question(), &leaf_of)?;
            let chosen_leaf = *leaf_of.get(&r.chosen).ok_or(Error::UnknownItem(r.chosen))?;
            *tallies.entry(sig.key()).or_default().entry(chosen_leaf).or_default() += 1;
        }
        Ok(SignatureIndex {
            leaf_of,
            tallies,
            indexed: self.records.len(),
        })
    }
}

/// Answer tallies grouped by cluster signature: for each signature, how
/// often an item from each leaf was picked as the odd one out.
#[derive(Debug, Clone)]
pub struct SignatureIndex {
    pub(crate) leaf_of: HashMap<ItemId, NodeId>,
    pub(crate) tallies: HashMap<[NodeId; 3], BTreeMap<NodeId, u64>>,
    indexed: usize,
}

impl SignatureIndex {
    pub fn leaf_of(&self) -> &HashMap<ItemId, NodeId> {
        &self.leaf_of
    }

    pub fn indexed(&self) -> usize {
        self.indexed
    }

    pub fn tally_total(&self) -> u64 {
        self.tallies.values().flat_map(|t| t.values()).sum()
    }

    pub fn tallies_for(&self, key: &[NodeId; 3]) -> Option<&BTreeMap<NodeId, u64>> {
        self.tallies.get(key)
    }
}
