//! One annotator's elicitation state, persisted under its own directory:
//!
//! ```text
//! session.json  phase, queue, served question, settings
//! pool.jsonl    answers, appended and synced before acknowledgement
//! model.json    current embedding checkpoint
//! tree.json     current hierarchy, once trained
//! ```

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hke_core::dataset::Dataset;
use hke_core::elicitation::{
    random_questions, select_batch, AnswerRecord, KnowledgePool, Question, QuestionSource,
    SelectionConfig, SelectionStats,
};
use hke_core::embedding::{embed_all, train, AnsweredTriplet, EmbeddingModel, TrainConfig};
use hke_core::experiment::{question_margin, RunSettings, SelectionMode};
use hke_core::hierarchy::{build_hierarchy, HierarchyConfig, HierarchyTree};
use hke_core::{derive_seed, ItemId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

const MODEL_STREAM: u64 = 2_000;
const TRAIN_STREAM: u64 = 4_000;
const TREE_STREAM: u64 = 5_000;
const SELECT_STREAM: u64 = 6_000;
const REFILL_STREAM: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("{message}")]
    Validation {
        message: String,
        legal_ids: Option<[ItemId; 3]>,
    },
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Core(#[from] hke_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

fn validation(message: impl Into<String>) -> SessionError {
    SessionError::Validation {
        message: message.into(),
        legal_ids: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    Training,
    Ready,
}

/// A question waiting to be served, with the margin it will be trained at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedQuestion {
    pub ids: [ItemId; 3],
    pub source: QuestionSource,
    pub margin: f64,
}

impl QueuedQuestion {
    pub fn question(&self) -> Question {
        let [a, b, c] = self.ids;
        Question::new(a, b, c, self.source).expect("queued ids are distinct")
    }

    pub fn id(&self) -> String {
        self.question().key()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: u32,
    pub id: String,
    pub responder: String,
    pub dataset: String,
    pub settings: RunSettings,
    pub phase: Phase,
    /// Completed training rounds.
    pub iteration: usize,
    pub refills: u64,
    pub queue: VecDeque<QueuedQuestion>,
    /// Served and not yet answered.
    pub current: Option<QueuedQuestion>,
    pub last_selection: Option<SelectionStats>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub target: usize,
    pub iteration: usize,
    pub phase: Phase,
    pub queued: usize,
    pub last_selection: Option<SelectionStats>,
    pub last_error: Option<String>,
}

#[derive(Debug)]
pub struct Session {
    pub state: SessionState,
    dir: PathBuf,
    pub pool: KnowledgePool,
    pub model: EmbeddingModel,
    pub tree: Option<HierarchyTree>,
}

/// Work handed to a background thread by [`Session::begin_training`].
#[derive(Debug)]
pub struct TrainJob {
    model: EmbeddingModel,
    triplets: Vec<AnsweredTriplet>,
    train: TrainConfig,
    hierarchy: HierarchyConfig,
}

pub struct TrainOutcome {
    model: EmbeddingModel,
    tree: HierarchyTree,
}

impl TrainJob {
    pub fn run(mut self, dataset: &Dataset) -> hke_core::Result<TrainOutcome> {
        train(&mut self.model, &self.triplets, dataset, &self.train)?;
        let mut tree = build_hierarchy(&embed_all(&self.model, dataset)?, &self.hierarchy)?;
        let labels = dataset.labels(None);
        if labels.len() == dataset.len() {
            tree.annotate(&labels);
        }
        Ok(TrainOutcome {
            model: self.model,
            tree,
        })
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Writes through a temporary file and a rename so readers never observe a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Session {
    pub fn create(
        dir: &Path,
        id: &str,
        responder: &str,
        settings: RunSettings,
        dataset: &Dataset,
    ) -> Result<Self> {
        settings.validate()?;
        let dir = dir.join(id);
        fs::create_dir_all(&dir)?;
        let model = EmbeddingModel::for_dataset(
            dataset,
            &settings.train.hidden,
            settings.train.embedding_dim,
            derive_seed(settings.seed, MODEL_STREAM),
        )?;
        let session = Self {
            state: SessionState {
                schema_version: SCHEMA_VERSION,
                id: id.to_owned(),
                responder: responder.to_owned(),
                dataset: dataset.name().to_owned(),
                settings,
                phase: Phase::Collecting,
                iteration: 0,
                refills: 0,
                queue: VecDeque::new(),
                current: None,
                last_selection: None,
                last_error: None,
            },
            dir,
            pool: KnowledgePool::new(),
            model,
            tree: None,
        };
        File::create(session.dir.join("pool.jsonl"))?.sync_all()?;
        session.save_model()?;
        session.save_state()?;
        Ok(session)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let state: SessionState = serde_json::from_str(&fs::read_to_string(dir.join("session.json"))?)?;
        let pool_path = dir.join("pool.jsonl");
        let pool = if pool_path.exists() {
            KnowledgePool::load_jsonl(&pool_path)?
        } else {
            KnowledgePool::new()
        };
        let model = EmbeddingModel::from_json(&fs::read_to_string(dir.join("model.json"))?)?;
        let tree_path = dir.join("tree.json");
        let tree = if tree_path.exists() {
            Some(HierarchyTree::from_json(&fs::read_to_string(tree_path)?)?)
        } else {
            None
        };
        Ok(Self {
            state,
            dir: dir.to_owned(),
            pool,
            model,
            tree,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save_state(&self) -> Result<()> {
        write_atomic(&self.dir.join("session.json"), &serde_json::to_string_pretty(&self.state)?)
    }

    fn save_model(&self) -> Result<()> {
        write_atomic(&self.dir.join("model.json"), &self.model.to_json()?)
    }

    fn save_tree(&self) -> Result<()> {
        match &self.tree {
            Some(t) => write_atomic(&self.dir.join("tree.json"), &t.to_json()?),
            None => Ok(()),
        }
    }

    pub fn progress(&self) -> Progress {
        Progress {
            answered: self.pool.len(),
            target: self.state.settings.total_questions(),
            iteration: self.state.iteration,
            phase: self.state.phase,
            queued: self.state.queue.len(),
            last_selection: self.state.last_selection.clone(),
            last_error: self.state.last_error.clone(),
        }
    }

    fn answered(&self, ids: &[ItemId; 3]) -> bool {
        let [a, b, c] = *ids;
        let q = Question::new(a, b, c, QuestionSource::Random).expect("distinct ids");
        self.pool.contains(&q, &self.state.responder)
    }

    /// The question to show. A served but unanswered question is returned
    /// again until it is answered.
    pub fn next_question(&mut self, dataset: &Dataset) -> Result<QueuedQuestion> {
        if self.state.phase == Phase::Training {
            return Err(SessionError::Conflict("session is training".into()));
        }
        if let Some(q) = &self.state.current {
            if !self.answered(&q.ids) {
                return Ok(q.clone());
            }
        }
        let next = loop {
            match self.state.queue.pop_front() {
                Some(q) if self.answered(&q.ids) => continue,
                Some(q) => break q,
                None => self.refill(dataset)?,
            }
        };
        self.state.phase = Phase::Collecting;
        self.state.current = Some(next.clone());
        self.save_state()?;
        Ok(next)
    }

    fn refill(&mut self, dataset: &Dataset) -> Result<()> {
        let settings = &self.state.settings;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, REFILL_STREAM + self.state.refills));
        self.state.refills += 1;
        let answered = self.pool.answered_by(&self.state.responder);
        let retries = settings.selection.max_retries.max(100);
        let (questions, stats) = match (&self.tree, settings.selection_mode) {
            (Some(tree), SelectionMode::Active) => {
                let cfg = SelectionConfig {
                    seed: derive_seed(settings.seed, SELECT_STREAM + self.state.iteration as u64),
                    ..settings.selection.clone()
                };
                let sel = select_batch(tree, &self.pool, &self.state.responder, settings.budget.max(1), &cfg, &mut rng)?;
                (sel.questions, Some(sel.stats))
            }
            (Some(_), SelectionMode::Random) => {
                (random_questions(&dataset.ids(), settings.budget.max(1), &answered, retries, &mut rng)?, None)
            }
            (None, _) => (random_questions(&dataset.ids(), settings.initial, &answered, retries, &mut rng)?, None),
        };
        if questions.is_empty() {
            return Err(SessionError::Conflict("no unanswered questions remain".into()));
        }
        let tree = self.tree.as_ref();
        self.state.queue = questions
            .iter()
            .map(|q| QueuedQuestion {
                ids: q.ids(),
                source: q.source,
                margin: question_margin(q, tree, settings),
            })
            .collect();
        if stats.is_some() {
            self.state.last_selection = stats;
        }
        Ok(())
    }

    /// Records an answer to the served question. Answering an already
    /// answered question is acknowledged without effect; returns whether the
    /// answer was new.
    pub fn submit(&mut self, question_id: &str, chosen: ItemId) -> Result<bool> {
        let ids = Question::parse_key(question_id)
            .ok_or_else(|| validation(format!("malformed question id `{question_id}`")))?;
        if self.answered(&ids) {
            return Ok(false);
        }
        let served = match &self.state.current {
            Some(q) if q.ids == ids => q.clone(),
            _ => return Err(validation(format!("question `{question_id}` is not the served question"))),
        };
        if !ids.contains(&chosen) {
            return Err(SessionError::Validation {
                message: format!(
                    "chosen item {chosen} is not one of {}, {}, {}",
                    ids[0], ids[1], ids[2]
                ),
                legal_ids: Some(ids),
            });
        }
        let mut record = AnswerRecord::new(
            &served.question(),
            chosen,
            &self.state.responder,
            served.margin,
            self.state.iteration,
        )?;
        record.timestamp = now_ms();
        KnowledgePool::append_jsonl(&self.dir.join("pool.jsonl"), &record)?;
        self.pool.add(record)?;
        self.state.current = None;
        self.save_state()?;
        Ok(true)
    }

    pub fn begin_training(&mut self, dataset: &Dataset) -> Result<TrainJob> {
        if self.state.phase == Phase::Training {
            return Err(SessionError::Conflict("training is already running".into()));
        }
        if self.pool.is_empty() {
            return Err(SessionError::Conflict("no answers to train on yet".into()));
        }
        let job = self.training_job(dataset)?;
        self.state.phase = Phase::Training;
        self.save_state()?;
        Ok(job)
    }

    /// The job for a session found in the training phase after a restart.
    pub fn resume_training(&self, dataset: &Dataset) -> Result<Option<TrainJob>> {
        if self.state.phase != Phase::Training {
            return Ok(None);
        }
        self.training_job(dataset).map(Some)
    }

    fn training_job(&self, dataset: &Dataset) -> Result<TrainJob> {
        let settings = &self.state.settings;
        let model = if settings.warm_start {
            self.model.clone()
        } else {
            EmbeddingModel::for_dataset(
                dataset,
                &settings.train.hidden,
                settings.train.embedding_dim,
                derive_seed(settings.seed, MODEL_STREAM),
            )?
        };
        let triplets = self
            .pool
            .records()
            .iter()
            .map(|r| {
                let [p1, p2] = r.positives();
                AnsweredTriplet::new(p1, p2, r.chosen, r.margin)
            })
            .collect::<hke_core::Result<Vec<_>>>()?;
        let round = self.state.iteration as u64;
        Ok(TrainJob {
            model,
            triplets,
            train: TrainConfig {
                seed: derive_seed(settings.seed, TRAIN_STREAM + round),
                ..settings.train.clone()
            },
            hierarchy: HierarchyConfig {
                seed: derive_seed(settings.seed, TREE_STREAM + round),
                ..settings.hierarchy.clone()
            },
        })
    }

    /// Installs a training result and moves to the ready phase. A failed
    /// run keeps the previous model and records the error.
    pub fn finish_training(&mut self, outcome: hke_core::Result<TrainOutcome>) -> Result<()> {
        match outcome {
            Ok(o) => {
                self.model = o.model;
                self.tree = Some(o.tree);
                self.state.iteration += 1;
                self.state.queue.clear();
                self.state.last_error = None;
                self.save_model()?;
                self.save_tree()?;
            }
            Err(e) => self.state.last_error = Some(e.to_string()),
        }
        self.state.phase = Phase::Ready;
        self.save_state()
    }
}
