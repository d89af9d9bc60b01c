use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::tree::{HierarchyNode, HierarchyTree};
use crate::{Error, ItemId, Result};

/// Majority label of `members` and the fraction of members carrying it.
/// Ties go to the lexicographically smallest label. `None` when no member
/// is labeled.
pub fn node_accuracy(members: &[ItemId], labels: &BTreeMap<ItemId, String>) -> Option<(f64, String)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in members {
        if let Some(l) = labels.get(m) {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for (label, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(label, count)| (count as f64 / members.len() as f64, label.to_string()))
}

fn pairs(n: usize) -> BigInt {
    BigInt::from(n) * BigInt::from(n.saturating_sub(1)) / 2
}

/// Per-label member counts of a node, with the node's pair contributions
/// folded into `acc`.
fn accumulate(
    node: &HierarchyNode,
    labels: &BTreeMap<ItemId, String>,
    acc: &mut BigRational,
) -> Result<BTreeMap<String, usize>> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut below: BTreeMap<String, BigInt> = BTreeMap::new();
    if node.is_leaf() {
        for m in &node.members {
            let label = labels
                .get(m)
                .ok_or_else(|| Error::InvalidConfig(format!("item {m} has no label")))?;
            *counts.entry(label.clone()).or_default() += 1;
        }
    } else {
        for child in &node.children {
            for (label, c) in accumulate(child, labels, acc)? {
                *below.entry(label.clone()).or_insert_with(BigInt::zero) += pairs(c);
                *counts.entry(label).or_default() += c;
            }
        }
    }
    let size = BigInt::from(node.members.len());
    for (label, &c) in &counts {
        // Same-label pairs whose smallest common node is this one.
        let here = pairs(c) - below.get(label).cloned().unwrap_or_else(BigInt::zero);
        if !here.is_zero() {
            *acc += BigRational::new(here * BigInt::from(c), size.clone());
        }
    }
    Ok(counts)
}

/// Dendrogram purity as an exact rational: the mean, over all unordered
/// pairs of items sharing a label, of the fraction of members of the pair's
/// smallest common node that carry that label.
pub fn dendrogram_purity_exact(
    tree: &HierarchyTree,
    labels: &BTreeMap<ItemId, String>,
) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    let counts = accumulate(&tree.root, labels, &mut acc)?;
    let total: BigInt = counts.values().map(|&c| pairs(c)).sum();
    if total.is_zero() {
        return Err(Error::NoSameLabelPair);
    }
    Ok(acc / BigRational::from_integer(total))
}

/// [`dendrogram_purity_exact`] rounded to the nearest `f64`.
pub fn dendrogram_purity(tree: &HierarchyTree, labels: &BTreeMap<ItemId, String>) -> Result<f64> {
    let exact = dendrogram_purity_exact(tree, labels)?;
    Ok(exact.to_f64().expect("purity lies in [0, 1]"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(id: usize, members: &[ItemId]) -> HierarchyNode {
        HierarchyNode {
            id,
            members: members.to_vec(),
            centroid: vec![],
            diversity: 0.0,
            majority_label: None,
            accuracy: None,
            children: vec![],
        }
    }

    fn labels(ls: &[&str]) -> BTreeMap<ItemId, String> {
        ls.iter().enumerate().map(|(i, l)| (i as ItemId, l.to_string())).collect()
    }

    #[test]
    fn accuracy_examples() {
        let mut ls = vec!["circle"; 9];
        ls.push("square");
        let members: Vec<ItemId> = (0..10).collect();
        assert_eq!(node_accuracy(&members, &labels(&ls)), Some((0.9, "circle".into())));
        assert_eq!(node_accuracy(&members[..9], &labels(&ls)), Some((1.0, "circle".into())));
        let mut tie = vec!["dog"; 5];
        tie.extend(["cat"; 5]);
        assert_eq!(node_accuracy(&members, &labels(&tie)), Some((0.5, "cat".into())));
    }

    #[test]
    fn purity_examples() {
        let l = labels(&["A", "A", "B", "B"]);
        let single = HierarchyTree {
            root: leaf(0, &[0, 1, 2, 3]),
            snapshot: None,
        };
        assert_eq!(dendrogram_purity(&single, &l).unwrap(), 0.5);

        let mut root = leaf(0, &[0, 1, 2, 3]);
        root.children = vec![leaf(1, &[0, 1]), leaf(2, &[2, 3])];
        let perfect = HierarchyTree { root, snapshot: None };
        assert_eq!(dendrogram_purity(&perfect, &l).unwrap(), 1.0);

        let no_pairs = labels(&["A", "B", "C", "D"]);
        assert!(matches!(
            dendrogram_purity(&perfect, &no_pairs),
            Err(Error::NoSameLabelPair)
        ));
    }
}
