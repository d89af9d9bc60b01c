use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<LatentNode>,
}

impl LatentNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            children: Vec::new(),
        }
    }

    pub fn branch(name: impl Into<String>, children: Vec<LatentNode>) -> Self {
        Self {
            name: name.into(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    fn collect_leaves(&self, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        for child in &self.children {
            prefix.push(child.name.clone());
            if child.is_leaf() {
                out.push(prefix.clone());
            } else {
                child.collect_leaves(prefix, out);
            }
            prefix.pop();
        }
    }
}

/// A rooted concept tree. The root's name is not part of any label path;
/// leaves correspond to the finest concepts items are labeled with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LatentNode", into = "LatentNode")]
pub struct LatentHierarchy {
    root: LatentNode,
}

impl LatentHierarchy {
    pub fn new(root: LatentNode) -> Result<Self> {
        if root.is_leaf() {
            return Err(Error::InvalidHierarchy(
                "latent hierarchy needs depth >= 1".into(),
            ));
        }
        fn check(node: &LatentNode) -> Result<()> {
            let mut names = BTreeSet::new();
            for child in &node.children {
                if !names.insert(child.name.as_str()) {
                    return Err(Error::InvalidHierarchy(format!(
                        "`{}` has two children named `{}`",
                        node.name, child.name
                    )));
                }
                check(child)?;
            }
            Ok(())
        }
        check(&root)?;
        Ok(Self { root })
    }

    /// Builds the tree implied by a set of label paths.
    pub fn from_label_paths<'a>(
        name: impl Into<String>,
        paths: impl IntoIterator<Item = &'a [String]>,
    ) -> Result<Self> {
        let mut root = LatentNode::leaf(name);
        for path in paths {
            let mut node = &mut root;
            for concept in path {
                let pos = match node.children.iter().position(|c| &c.name == concept) {
                    Some(p) => p,
                    None => {
                        node.children.push(LatentNode::leaf(concept.clone()));
                        node.children.len() - 1
                    }
                };
                node = &mut node.children[pos];
            }
        }
        Self::new(root)
    }

    pub fn root(&self) -> &LatentNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Label paths of all leaves in pre-order.
    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut Vec::new(), &mut out);
        out
    }

    pub fn leaf_names(&self) -> BTreeSet<String> {
        self.leaf_paths()
            .into_iter()
            .filter_map(|mut p| p.pop())
            .collect()
    }

    /// Child-index path of the leaf an item with `label_path` belongs to.
    ///
    /// The full path is tried first; failing that, the finest label is
    /// matched against leaf names, which must then be unique.
    pub fn resolve(&self, label_path: &[String]) -> Option<Vec<usize>> {
        if let Some(p) = self.resolve_exact(label_path) {
            return Some(p);
        }
        let finest = label_path.last()?;
        let mut found = None;
        for (path, idx) in self.leaf_paths().iter().zip(self.leaf_index_paths()) {
            if path.last() == Some(finest) {
                if found.is_some() {
                    return None;
                }
                found = Some(idx);
            }
        }
        found
    }

    fn resolve_exact(&self, label_path: &[String]) -> Option<Vec<usize>> {
        let mut node = &self.root;
        let mut out = Vec::with_capacity(label_path.len());
        for concept in label_path {
            let pos = node.children.iter().position(|c| &c.name == concept)?;
            out.push(pos);
            node = &node.children[pos];
        }
        node.is_leaf().then_some(out)
    }

    fn leaf_index_paths(&self) -> Vec<Vec<usize>> {
        fn walk(node: &LatentNode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            for (i, child) in node.children.iter().enumerate() {
                prefix.push(i);
                if child.is_leaf() {
                    out.push(prefix.clone());
                } else {
                    walk(child, prefix, out);
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Names along an index path.
    pub fn names_of(&self, index_path: &[usize]) -> Vec<String> {
        let mut node = &self.root;
        index_path
            .iter()
            .map(|&i| {
                node = &node.children[i];
                node.name.clone()
            })
            .collect()
    }

    /// Every non-root inner node as (label path, names of leaves below it).
    pub fn inner_concepts(&self) -> Vec<(Vec<String>, BTreeSet<String>)> {
        fn walk(
            node: &LatentNode,
            prefix: &mut Vec<String>,
            out: &mut Vec<(Vec<String>, BTreeSet<String>)>,
        ) -> BTreeSet<String> {
            if node.is_leaf() {
                return BTreeSet::from([node.name.clone()]);
            }
            let mut below = BTreeSet::new();
            for child in &node.children {
                prefix.push(child.name.clone());
                below.extend(walk(child, prefix, out));
                prefix.pop();
            }
            if !prefix.is_empty() {
                out.push((prefix.clone(), below.clone()));
            }
            below
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Checks that every item of `dataset` resolves to exactly one leaf.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        for item in dataset.items() {
            let path = item.label_path.as_deref().unwrap_or(&[]);
            if self.resolve(path).is_none() {
                return Err(Error::NotInLatent(item.id));
            }
        }
        Ok(())
    }
}

impl TryFrom<LatentNode> for LatentHierarchy {
    type Error = Error;

    fn try_from(root: LatentNode) -> Result<Self> {
        Self::new(root)
    }
}

impl From<LatentHierarchy> for LatentNode {
    fn from(h: LatentHierarchy) -> Self {
        h.root
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn animals() -> LatentHierarchy {
        LatentHierarchy::new(LatentNode::branch(
            "root",
            vec![
                LatentNode::branch(
                    "animal",
                    vec![LatentNode::leaf("cat"), LatentNode::leaf("dog")],
                ),
                LatentNode::branch("vehicle", vec![LatentNode::leaf("car")]),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn resolves_full_and_leaf_names() {
        let t = animals();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.resolve(&s(&["animal", "dog"])), Some(vec![0, 1]));
        assert_eq!(t.resolve(&s(&["whatever", "car"])), Some(vec![1, 0]));
        assert_eq!(t.resolve(&s(&["animal"])), None);
        assert_eq!(t.names_of(&[1, 0]), s(&["vehicle", "car"]));
    }

    #[test]
    fn ambiguous_leaf_names_do_not_resolve() {
        let paths = [s(&["a", "thin"]), s(&["b", "thin"])];
        let t = LatentHierarchy::from_label_paths("root", paths.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(t.resolve(&s(&["thin"])), None);
        assert_eq!(t.resolve(&s(&["b", "thin"])), Some(vec![1, 0]));
    }

    #[test]
    fn json_shape_and_validation() {
        let t = animals();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.starts_with(r#"{"name":"root","children":["#));
        let back: LatentHierarchy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(LatentHierarchy::new(LatentNode::leaf("solo")).is_err());
        assert!(serde_json::from_str::<LatentHierarchy>(r#"{"name":"solo"}"#).is_err());
        let concepts = t.inner_concepts();
        assert_eq!(concepts.len(), 2);
        assert!(concepts[0].1.contains("cat"));
    }
}
