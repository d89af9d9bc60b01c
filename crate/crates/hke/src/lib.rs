//! Command-line tools and the annotation server for hierarchical knowledge
//! elicitation. The algorithms live in `hke-core`.

pub mod cli;
pub mod service;
