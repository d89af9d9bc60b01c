//! Question proposal per hierarchy node, the knowledge pool of answered
//! questions, and the Dirichlet-based rejection filter.

mod dirichlet;
mod pool;
mod question;
mod select;

pub use dirichlet::{expected_max, variance_sum, DirichletStats};
pub use pool::{AnswerRecord, KnowledgePool, SignatureIndex};
pub use question::{cluster_signature, Question, QuestionSource, Signature};
pub use select::{
    propose_questions, random_questions, reject, select_batch, tally_similar, RejectionDecision,
    Selection, SelectionConfig, SelectionStats, Verdict,
};
