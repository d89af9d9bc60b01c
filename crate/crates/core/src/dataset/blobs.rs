//! Gaussian stand-ins for image datasets with a class hierarchy.
//!
//! Leaf centers are sums of random offsets along the root-to-leaf path, with
//! offsets shrinking geometrically by depth, so leaves that split higher up
//! the tree end up farther apart. Each point also receives one of a few large
//! "style" offsets drawn independently of its class, which plays the role of
//! nuisance variation (lighting, background) in raw pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Item, LatentHierarchy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobConfig {
    pub per_leaf: usize,
    pub dim: usize,
    pub seed: u64,
    /// Offset length for children of the root.
    pub top_separation: f64,
    /// Ratio between offset lengths of consecutive depths.
    pub depth_decay: f64,
    /// Per-coordinate standard deviation of the within-class noise.
    pub noise: f64,
    /// Number of class-independent style offsets.
    pub nuisance_modes: usize,
    /// Length of each style offset.
    pub nuisance_scale: f64,
}

impl BlobConfig {
    pub fn new(per_leaf: usize, dim: usize, seed: u64) -> Self {
        Self {
            per_leaf,
            dim,
            seed,
            top_separation: 4.0,
            depth_decay: 0.6,
            noise: 0.35,
            nuisance_modes: 4,
            nuisance_scale: 8.0,
        }
    }
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self::new(100, 32, 0)
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize, length: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x * length / norm).collect()
}

pub fn generate_blobs(
    class_tree: &LatentHierarchy,
    per_leaf: usize,
    dim: usize,
    seed: u64,
) -> Result<Dataset> {
    generate_blobs_with(class_tree, &BlobConfig::new(per_leaf, dim, seed))
}

pub fn generate_blobs_with(class_tree: &LatentHierarchy, config: &BlobConfig) -> Result<Dataset> {
    if config.per_leaf < 1 {
        return Err(Error::InvalidConfig("per_leaf must be >= 1".into()));
    }
    if config.dim < 2 {
        return Err(Error::InvalidConfig("dim must be >= 2".into()));
    }
    let leaves = class_tree.leaf_paths();
    if leaves.len() < 2 {
        return Err(Error::InvalidHierarchy(
            "blob generation needs at least two leaves".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // One offset per tree node, keyed by label-path prefix, drawn in
    // pre-order so the layout depends only on the seed and the tree.
    let mut offsets: Vec<(Vec<String>, Vec<f64>)> = Vec::new();
    for leaf in &leaves {
        for depth in 1..=leaf.len() {
            let prefix = &leaf[..depth];
            if !offsets.iter().any(|(p, _)| p.as_slice() == prefix) {
                let length = config.top_separation * config.depth_decay.powi(depth as i32 - 1);
                offsets.push((prefix.to_vec(), random_direction(&mut rng, config.dim, length)));
            }
        }
    }
    let styles: Vec<Vec<f64>> = (0..config.nuisance_modes)
        .map(|_| random_direction(&mut rng, config.dim, config.nuisance_scale))
        .collect();

    let mut items = Vec::with_capacity(leaves.len() * config.per_leaf);
    for leaf in &leaves {
        let mut center = vec![0.0; config.dim];
        for (prefix, offset) in &offsets {
            if leaf.starts_with(prefix) {
                center.iter_mut().zip(offset).for_each(|(c, o)| *c += o);
            }
        }
        for _ in 0..config.per_leaf {
            let style = if styles.is_empty() {
                None
            } else {
                Some(&styles[rng.random_range(0..styles.len())])
            };
            let features = center
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let noise: f64 = rng.sample(StandardNormal);
                    c + config.noise * noise + style.map_or(0.0, |s| s[j])
                })
                .collect();
            let id = items.len() as crate::ItemId;
            items.push(Item::new(id, features).with_labels(leaf.iter().cloned()));
        }
    }
    Dataset::new(format!("blobs-{}", config.seed), items)
}
