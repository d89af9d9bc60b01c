//! Items, datasets, latent ground-truth hierarchies, and their file formats.

mod blobs;
mod io;
mod latent;
mod shapes;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, ItemId, Result};

pub use blobs::{generate_blobs, generate_blobs_with, BlobConfig};
pub use io::{load_dataset, load_latent, save_dataset, save_latent, stimuli_sidecar_path};
pub use latent::{LatentHierarchy, LatentNode};
pub use shapes::{
    generate_shapes, rasterize, render_stimulus, shape_bias_hierarchy, Deformation, ShapeColor,
    ShapeKind, ShapeStimulus, Thickness, CANVAS,
};

/// Something that can be shown to an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Stimulus {
    Shape(ShapeStimulus),
    Image { href: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub features: Vec<f64>,
    /// Ground-truth concepts, coarsest first.
    pub label_path: Option<Vec<String>>,
    pub stimulus: Option<Stimulus>,
}

impl Item {
    pub fn new(id: ItemId, features: Vec<f64>) -> Self {
        Self {
            id,
            features,
            label_path: None,
            stimulus: None,
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, path: impl IntoIterator<Item = S>) -> Self {
        self.label_path = Some(path.into_iter().map(Into::into).collect());
        self
    }

    /// Finest ground-truth concept.
    pub fn leaf_label(&self) -> Option<&str> {
        self.label_path
            .as_ref()
            .and_then(|p| p.last())
            .map(String::as_str)
    }

    /// Label path truncated to `depth` concepts (the full path if shorter),
    /// joined with `/`.
    pub fn label_at(&self, depth: usize) -> Option<String> {
        self.label_path
            .as_ref()
            .map(|p| p[..depth.min(p.len())].join("/"))
    }
}

/// A validated, immutable collection of items with a common feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    items: Vec<Item>,
    index: HashMap<ItemId, usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, items: Vec<Item>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::NoItems);
        }
        if items.len() < 3 {
            return Err(Error::TooFewItems(items.len()));
        }
        let dim = items[0].features.len();
        let mut index = HashMap::with_capacity(items.len());
        for (row, item) in items.iter().enumerate() {
            if item.features.len() != dim {
                return Err(Error::Dimension {
                    row: row + 1,
                    expected: dim,
                    found: item.features.len(),
                });
            }
            if item.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature(item.id));
            }
            if index.insert(item.id, row).is_some() {
                return Err(Error::DuplicateId {
                    row: row + 1,
                    id: item.id,
                });
            }
        }
        check_label_consistency(&items)?;
        Ok(Self {
            name: name.into(),
            dim,
            items,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|i| i.id).collect()
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.index.get(&id).map(|&i| &self.items[i])
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn item(&self, id: ItemId) -> Result<&Item> {
        self.get(id).ok_or(Error::UnknownItem(id))
    }

    /// Row-major `len × dim` feature matrix in item order.
    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|i| i.features.clone()).collect()
    }

    /// Number of distinct 3AFC questions, `B choose 3`.
    pub fn question_space(&self) -> u128 {
        let b = self.items.len() as u128;
        b * (b - 1) * (b - 2) / 6
    }

    /// Labels at the given depth (or the finest label when `None`), keyed
    /// by item id. Items without labels are omitted.
    pub fn labels(&self, depth: Option<usize>) -> BTreeMap<ItemId, String> {
        self.items
            .iter()
            .filter_map(|item| {
                let label = match depth {
                    Some(d) => item.label_at(d),
                    None => item.leaf_label().map(str::to_owned),
                };
                label.map(|l| (item.id, l))
            })
            .collect()
    }
}

/// Label paths must describe a tree: no concept may be both an ancestor and a
/// descendant of another, and no item's full path may be an inner node for
/// another item.
fn check_label_consistency(items: &[Item]) -> Result<()> {
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut full_paths: BTreeSet<&[String]> = BTreeSet::new();
    for item in items {
        let Some(path) = &item.label_path else {
            continue;
        };
        if path.is_empty() {
            return Err(Error::InconsistentLabels(format!(
                "item {} has an empty label path",
                item.id
            )));
        }
        for pair in path.windows(2) {
            edges.entry(&pair[0]).or_default().insert(&pair[1]);
        }
        full_paths.insert(path.as_slice());
    }
    for path in &full_paths {
        for len in 1..path.len() {
            if full_paths.contains(&path[..len]) {
                return Err(Error::InconsistentLabels(format!(
                    "`{}` is both a leaf and an ancestor of `{}`",
                    path[..len].join("/"),
                    path.join("/")
                )));
            }
        }
    }
    // Cycle check on the concept-name graph.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        node: &'a str,
        edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        marks: &mut HashMap<&'a str, Mark>,
    ) -> Result<()> {
        match marks.get(node) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => {
                return Err(Error::InconsistentLabels(format!(
                    "concept `{node}` appears above and below another concept"
                )))
            }
            None => {}
        }
        marks.insert(node, Mark::Open);
        if let Some(children) = edges.get(node) {
            for child in children {
                visit(child, edges, marks)?;
            }
        }
        marks.insert(node, Mark::Done);
        Ok(())
    }
    let mut marks = HashMap::new();
    for node in edges.keys() {
        visit(node, &edges, &mut marks)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: ItemId, path: &[&str]) -> Item {
        Item::new(id, vec![id as f64, 0.0]).with_labels(path.iter().copied())
    }

    #[test]
    fn rejects_small_and_empty() {
        assert!(matches!(Dataset::new("x", vec![]), Err(Error::NoItems)));
        let two = vec![Item::new(0, vec![0.0]), Item::new(1, vec![1.0])];
        assert!(matches!(Dataset::new("x", two), Err(Error::TooFewItems(2))));
    }

    #[test]
    fn rejects_duplicates_dims_and_nan() {
        let dup = vec![
            Item::new(0, vec![0.0]),
            Item::new(1, vec![1.0]),
            Item::new(1, vec![2.0]),
        ];
        assert!(matches!(
            Dataset::new("x", dup),
            Err(Error::DuplicateId { row: 3, id: 1 })
        ));
        let dims = vec![
            Item::new(0, vec![0.0]),
            Item::new(1, vec![1.0, 2.0]),
            Item::new(2, vec![2.0]),
        ];
        assert!(matches!(
            Dataset::new("x", dims),
            Err(Error::Dimension { row: 2, .. })
        ));
        let nan = vec![
            Item::new(0, vec![0.0]),
            Item::new(1, vec![f64::NAN]),
            Item::new(2, vec![2.0]),
        ];
        assert!(matches!(
            Dataset::new("x", nan),
            Err(Error::NonFiniteFeature(1))
        ));
    }

    #[test]
    fn label_cycles_are_rejected() {
        let items = vec![
            item(0, &["animal", "cat"]),
            item(1, &["cat", "animal"]),
            item(2, &["animal", "dog"]),
        ];
        assert!(matches!(
            Dataset::new("x", items),
            Err(Error::InconsistentLabels(_))
        ));
        let items = vec![
            item(0, &["animal"]),
            item(1, &["animal", "cat"]),
            item(2, &["animal", "dog"]),
        ];
        assert!(matches!(
            Dataset::new("x", items),
            Err(Error::InconsistentLabels(_))
        ));
    }

    #[test]
    fn shared_names_under_different_parents_are_fine() {
        let items = vec![
            item(0, &["circle", "thin"]),
            item(1, &["square", "thin"]),
            item(2, &["square", "thick"]),
        ];
        let ds = Dataset::new("x", items).unwrap();
        assert_eq!(ds.question_space(), 1);
        assert_eq!(ds.labels(Some(1))[&1], "square");
        assert_eq!(ds.labels(None)[&2], "thick");
    }
}
