//! Divisive hierarchical clustering of embeddings and its evaluation.
//!
//! Trees are grown top-down: every sufficiently large node is split with
//! K-means, with K picked by the silhouette coefficient, and kept as a leaf
//! when no split is convincing.

mod kmeans;
mod metrics;
mod tree;

pub use kmeans::{choose_k, kmeans, silhouette, KMeans, KSelection, RESTARTS};
pub use metrics::{dendrogram_purity, dendrogram_purity_exact, node_accuracy};
pub use tree::{
    build_hierarchy, diversity_factor, HierarchyConfig, HierarchyNode, HierarchyTree, NodeId,
};
