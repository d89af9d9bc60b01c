use thiserror::Error;

use crate::ItemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset has no items")]
    NoItems,
    #[error("dataset needs at least 3 items, got {0}")]
    TooFewItems(usize),
    #[error("row {row}: expected {expected} features, found {found}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: duplicate item id {id}")]
    DuplicateId { row: usize, id: ItemId },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("item {0}: non-finite feature value")]
    NonFiniteFeature(ItemId),
    #[error("inconsistent label hierarchy: {0}")]
    InconsistentLabels(String),
    #[error("unknown item id {0}")]
    UnknownItem(ItemId),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no answered triplets to train on")]
    EmptyTriplets,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("no pair of items shares a label")]
    NoSameLabelPair,
    #[error("no hierarchy node has at least 3 members")]
    NoProposableNode,
    #[error("item {0} is not covered by the latent hierarchy")]
    NotInLatent(ItemId),
    #[error("missing class {0}")]
    MissingClass(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
