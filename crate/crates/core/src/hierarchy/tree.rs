use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kmeans::choose_k;
use super::metrics::node_accuracy;
use crate::embedding::{squared_distance, Embeddings};
use crate::{Error, ItemId, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    /// Nodes smaller than this are never split.
    pub min_split_size: usize,
    /// Depth below which no further splits happen (root has depth 0).
    pub max_depth: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Best silhouette a split must reach to be accepted.
    pub min_silhouette: f64,
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            min_split_size: 8,
            max_depth: 6,
            k_min: 2,
            k_max: 5,
            min_silhouette: 0.15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: NodeId,
    pub members: Vec<ItemId>,
    pub centroid: Vec<f64>,
    #[serde(rename = "d_H")]
    pub diversity: f64,
    pub majority_label: Option<String>,
    pub accuracy: Option<f64>,
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// This node and all descendants in pre-order.
    pub fn iter(&self) -> impl Iterator<Item = &HierarchyNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }
}

/// Mean squared distance over ordered pairs of distinct child centroids,
/// `Σ_{p≠k} ‖c_p − c_k‖² / (n² − n)`; zero with fewer than two children.
pub fn diversity_factor(child_centroids: &[Vec<f64>]) -> f64 {
    let n = child_centroids.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for p in 0..n {
        for k in 0..n {
            if p != k {
                sum += squared_distance(&child_centroids[p], &child_centroids[k]);
            }
        }
    }
    sum / (n * n - n) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyTree {
    pub root: HierarchyNode,
    /// Embedding the tree was built from; not part of the JSON export.
    #[serde(skip)]
    pub snapshot: Option<Embeddings>,
}

fn mean(rows: &[usize], vectors: &[Vec<f64>]) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut c = vec![0.0; dim];
    for &r in rows {
        c.iter_mut().zip(&vectors[r]).for_each(|(a, x)| *a += x);
    }
    c.iter_mut().for_each(|a| *a /= rows.len().max(1) as f64);
    c
}

struct Builder<'a> {
    embeddings: &'a Embeddings,
    config: &'a HierarchyConfig,
    next_id: NodeId,
}

impl Builder<'_> {
    fn node(&mut self, rows: Vec<usize>, depth: usize) -> Result<HierarchyNode> {
        let id = self.next_id;
        self.next_id += 1;
        let vectors = &self.embeddings.vectors;
        let centroid = mean(&rows, vectors);
        let mut children = Vec::new();
        if rows.len() >= self.config.min_split_size.max(2) && depth < self.config.max_depth {
            let points: Vec<Vec<f64>> = rows.iter().map(|&r| vectors[r].clone()).collect();
            let sel = choose_k(
                &points,
                self.config.k_min,
                self.config.k_max,
                crate::derive_seed(self.config.seed, id as u64),
            )?;
            if sel.silhouette >= self.config.min_silhouette {
                let mut parts = vec![Vec::new(); sel.k];
                for (&row, &a) in rows.iter().zip(&sel.clustering.assignment) {
                    parts[a].push(row);
                }
                // Larger clusters first, then by lowest member row.
                parts.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
                for part in parts {
                    children.push(self.node(part, depth + 1)?);
                }
            }
        }
        let child_centroids: Vec<Vec<f64>> = children.iter().map(|c| c.centroid.clone()).collect();
        Ok(HierarchyNode {
            id,
            members: rows.iter().map(|&r| self.embeddings.ids[r]).collect(),
            centroid,
            diversity: diversity_factor(&child_centroids),
            majority_label: None,
            accuracy: None,
            children,
        })
    }
}

/// Grows a tree top-down. A node is split when it has at least
/// `min_split_size` members, lies above `max_depth`, and the best K in
/// `k_min..=k_max` reaches `min_silhouette`; otherwise it stays a leaf.
/// Node ids are assigned in pre-order starting at 0 for the root.
pub fn build_hierarchy(embeddings: &Embeddings, config: &HierarchyConfig) -> Result<HierarchyTree> {
    if embeddings.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: embeddings.len(),
        });
    }
    let mut builder = Builder {
        embeddings,
        config,
        next_id: 0,
    };
    let root = builder.node((0..embeddings.len()).collect(), 0)?;
    let tree = HierarchyTree {
        root,
        snapshot: Some(embeddings.clone()),
    };
    tree.check_partition(&embeddings.ids)?;
    Ok(tree)
}

impl HierarchyTree {
    pub fn nodes(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.root.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes().count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes().filter(|n| n.is_leaf())
    }

    pub fn node(&self, id: NodeId) -> Option<&HierarchyNode> {
        self.nodes().find(|n| n.id == id)
    }

    /// Leaf node id of every item.
    pub fn leaf_of(&self) -> HashMap<ItemId, NodeId> {
        let mut out = HashMap::new();
        for leaf in self.leaves() {
            for &m in &leaf.members {
                out.insert(m, leaf.id);
            }
        }
        out
    }

    /// Verifies that children partition their parent at every node and that
    /// the root covers exactly `ids`.
    pub fn check_partition(&self, ids: &[ItemId]) -> Result<()> {
        let all: BTreeSet<ItemId> = ids.iter().copied().collect();
        let root: BTreeSet<ItemId> = self.root.members.iter().copied().collect();
        if root != all || root.len() != self.root.members.len() {
            return Err(Error::InvalidHierarchy(
                "root does not cover the item set exactly".into(),
            ));
        }
        for node in self.nodes() {
            if node.is_leaf() {
                continue;
            }
            let mut union: Vec<ItemId> = node
                .children
                .iter()
                .flat_map(|c| c.members.iter().copied())
                .collect();
            union.sort_unstable();
            let mut own = node.members.clone();
            own.sort_unstable();
            if union != own {
                return Err(Error::InvalidHierarchy(format!(
                    "children of node {} do not partition it",
                    node.id
                )));
            }
        }
        Ok(())
    }

    /// Fills `majority_label` and `accuracy` on every node from `labels`.
    pub fn annotate(&mut self, labels: &BTreeMap<ItemId, String>) {
        fn walk(node: &mut HierarchyNode, labels: &BTreeMap<ItemId, String>) {
            if let Some((acc, label)) = node_accuracy(&node.members, labels) {
                node.accuracy = Some(acc);
                node.majority_label = Some(label);
            }
            node.children.iter_mut().for_each(|c| walk(c, labels));
        }
        walk(&mut self.root, labels);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.root)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(Self {
            root: serde_json::from_str(s)?,
            snapshot: None,
        })
    }

    /// `item_id,leaf_id,path` rows, where the path lists node ids from the
    /// root down to the leaf separated by `/`.
    pub fn leaf_csv(&self) -> String {
        fn walk(node: &HierarchyNode, prefix: &mut Vec<NodeId>, rows: &mut Vec<(ItemId, NodeId, String)>) {
            prefix.push(node.id);
            if node.is_leaf() {
                let path = prefix.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("/");
                rows.extend(node.members.iter().map(|&m| (m, node.id, path.clone())));
            }
            for child in &node.children {
                walk(child, prefix, rows);
            }
            prefix.pop();
        }
        let mut rows = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut rows);
        rows.sort_by_key(|r| r.0);
        let mut out = String::from("item_id,leaf_id,path\n");
        for (item, leaf, path) in rows {
            let _ = writeln!(out, "{item},{leaf},{path}");
        }
        out
    }
}
