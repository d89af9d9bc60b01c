//! Hierarchical knowledge elicitation from odd-one-out (3AFC) judgments.
//!
//! The pipeline trains a metric embedding on answered triplets with a
//! dual-triplet hinge loss, extracts a hierarchy by divisive K-means,
//! and picks the next questions per hierarchy node, filtering them with
//! Dirichlet posterior moments of the answers given to similar questions.
//!
//! Modules:
//! * [`dataset`]: items, synthetic datasets, latent hierarchies, file I/O.
//! * [`embedding`]: the MLP embedding, losses, margins, and trainer.
//! * [`hierarchy`]: K-means, silhouette, divisive trees, purity metrics.
//! * [`elicitation`]: question proposal, knowledge pool, rejection filter.
//! * [`participants`]: simulated responders with latent hierarchies.
//! * [`experiment`]: the elicitation loop, ablation harness, reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod elicitation;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod par;
pub mod participants;

pub use error::{Error, Result};

/// Identifier of a dataset item.
pub type ItemId = u32;

/// Derives an independent seed for a numbered sub-stream (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
