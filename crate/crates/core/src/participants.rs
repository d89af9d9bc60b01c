//! Simulated responders that answer odd-one-out questions from a known
//! concept tree.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, LatentHierarchy, LatentNode};
use crate::elicitation::Question;
use crate::{Error, ItemId, Result};

/// The ten image classes used by the built-in participant trees.
pub const CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Answers questions with the lowest-common-ancestor rule: the two items
/// whose leaves meet deepest in the latent tree are the positives.
#[derive(Debug, Clone)]
pub struct VirtualParticipant {
    name: String,
    latent: LatentHierarchy,
    noise: f64,
    seed: u64,
    rng: ChaCha8Rng,
    leaf_paths: HashMap<ItemId, Vec<usize>>,
}

impl VirtualParticipant {
    /// Resolves every item of `dataset` to a leaf of `latent`.
    pub fn new(
        name: impl Into<String>,
        latent: LatentHierarchy,
        dataset: &Dataset,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!("noise must lie in [0, 1), got {noise}")));
        }
        let mut leaf_paths = HashMap::with_capacity(dataset.len());
        for item in dataset.items() {
            let path = item.label_path.as_deref().unwrap_or(&[]);
            let idx = latent.resolve(path).ok_or(Error::NotInLatent(item.id))?;
            leaf_paths.insert(item.id, idx);
        }
        Ok(Self {
            name: name.into(),
            latent,
            noise,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaf_paths,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn latent(&self) -> &LatentHierarchy {
        &self.latent
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Restarts the random stream.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Leaf label of each item under this participant's tree.
    pub fn leaf_labels(&self) -> std::collections::BTreeMap<ItemId, String> {
        self.leaf_paths
            .iter()
            .map(|(&id, p)| (id, self.latent.names_of(p).join("/")))
            .collect()
    }

    /// Depth of the lowest common ancestor of two items' leaves (root = 0).
    pub fn similarity(&self, x: ItemId, y: ItemId) -> Result<usize> {
        let px = self.leaf_paths.get(&x).ok_or(Error::NotInLatent(x))?;
        let py = self.leaf_paths.get(&y).ok_or(Error::NotInLatent(y))?;
        Ok(px.iter().zip(py).take_while(|(a, b)| a == b).count())
    }

    /// The item this participant picks as most dissimilar.
    pub fn answer(&mut self, question: &Question) -> Result<ItemId> {
        let ids = question.ids();
        // Pair (i, j) has complement k.
        const PAIRS: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
        let mut sims = [0usize; 3];
        for (s, &(i, j, _)) in sims.iter_mut().zip(&PAIRS) {
            *s = self.similarity(ids[i], ids[j])?;
        }
        let best = *sims.iter().max().expect("three pairs");
        let candidates: Vec<ItemId> = PAIRS
            .iter()
            .zip(&sims)
            .filter(|(_, &s)| s == best)
            .map(|(&(_, _, k), _)| ids[k])
            .collect();
        let mut chosen = if candidates.len() == 1 {
            candidates[0]
        } else {
            let mut c = candidates;
            c.sort_unstable();
            c[self.rng.random_range(0..c.len())]
        };
        if self.noise > 0.0 && self.rng.random::<f64>() < self.noise {
            let others: Vec<ItemId> = ids.into_iter().filter(|&i| i != chosen).collect();
            chosen = others[self.rng.random_range(0..2)];
        }
        Ok(chosen)
    }
}

pub fn virtual_answer(participant: &mut VirtualParticipant, question: &Question) -> Result<ItemId> {
    participant.answer(question)
}

fn leaves(names: &[&str]) -> Vec<LatentNode> {
    names.iter().map(|n| LatentNode::leaf(*n)).collect()
}

fn transportation() -> LatentNode {
    LatentNode::branch(
        "transportation",
        vec![
            LatentNode::branch("road", leaves(&["automobile", "truck"])),
            LatentNode::branch("non_road", leaves(&["airplane", "ship"])),
        ],
    )
}

/// Concept tree of built-in participant 1, 2 or 3.
///
/// All three split animals from transportation and share the ten classes.
/// They group the animals differently: by size (1), mammal or not (2), and
/// pet or not (3).
pub fn participant_tree(index: usize) -> Result<LatentHierarchy> {
    let animal = match index {
        1 => vec![
            LatentNode::branch("small_animal", leaves(&["bird", "cat", "dog", "frog"])),
            LatentNode::branch("big_animal", leaves(&["deer", "horse"])),
        ],
        2 => vec![
            LatentNode::branch("mammal", leaves(&["cat", "deer", "dog", "horse"])),
            LatentNode::branch("non_mammal", leaves(&["bird", "frog"])),
        ],
        3 => vec![
            LatentNode::branch("pet", leaves(&["cat", "dog"])),
            LatentNode::branch("non_pet", leaves(&["bird", "deer", "frog", "horse"])),
        ],
        _ => {
            return Err(Error::InvalidConfig(format!(
                "participant index must be 1, 2 or 3, got {index}"
            )))
        }
    };
    LatentHierarchy::new(LatentNode::branch(
        format!("participant{index}"),
        vec![LatentNode::branch("animal", animal), transportation()],
    ))
}

/// The three built-in participants over a dataset labeled with [`CLASSES`].
pub fn standard_participants(dataset: &Dataset, noise: f64, seed: u64) -> Result<Vec<VirtualParticipant>> {
    let present: std::collections::BTreeSet<String> = dataset
        .items()
        .iter()
        .filter_map(|i| i.leaf_label().map(str::to_owned))
        .collect();
    for class in CLASSES {
        if !present.contains(class) {
            return Err(Error::MissingClass(class.to_owned()));
        }
    }
    (1..=3)
        .map(|i| {
            VirtualParticipant::new(
                format!("participant{i}"),
                participant_tree(i)?,
                dataset,
                noise,
                seed.wrapping_add(i as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_blobs, Item};
    use crate::elicitation::QuestionSource;

    fn q(a: ItemId, b: ItemId, c: ItemId) -> Question {
        Question::new(a, b, c, QuestionSource::Random).unwrap()
    }

    fn small() -> (Dataset, LatentHierarchy) {
        let ds = Dataset::new(
            "t",
            vec![
                Item::new(0, vec![0.0]).with_labels(["animal", "cat"]),
                Item::new(1, vec![0.0]).with_labels(["animal", "dog"]),
                Item::new(2, vec![0.0]).with_labels(["vehicle", "car"]),
                Item::new(3, vec![0.0]).with_labels(["vehicle", "plane"]),
                Item::new(4, vec![0.0]).with_labels(["animal", "cat"]),
                Item::new(5, vec![0.0]).with_labels(["animal", "cat"]),
            ],
        )
        .unwrap();
        let latent = LatentHierarchy::new(LatentNode::branch(
            "root",
            vec![
                LatentNode::branch("animal", leaves(&["cat", "dog"])),
                LatentNode::branch("vehicle", leaves(&["car", "plane"])),
            ],
        ))
        .unwrap();
        (ds, latent)
    }

    #[test]
    fn lca_rule() {
        let (ds, latent) = small();
        let mut p = VirtualParticipant::new("p", latent, &ds, 0.0, 0).unwrap();
        assert_eq!(p.similarity(0, 1).unwrap(), 1);
        assert_eq!(p.similarity(0, 2).unwrap(), 0);
        assert_eq!(p.similarity(0, 4).unwrap(), 2);
        assert_eq!(p.answer(&q(0, 1, 2)).unwrap(), 2);
        assert_eq!(p.answer(&q(0, 2, 3)).unwrap(), 0);
        // A finer match wins over a coarser one.
        assert_eq!(p.answer(&q(0, 4, 1)).unwrap(), 1);
    }

    #[test]
    fn full_tie_is_seeded() {
        let (ds, latent) = small();
        let run = |seed| {
            let mut p = VirtualParticipant::new("p", latent.clone(), &ds, 0.0, seed).unwrap();
            (0..50).map(|_| p.answer(&q(0, 4, 5)).unwrap()).collect::<Vec<_>>()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        for id in [0, 4, 5] {
            assert!(a.contains(&id));
        }
    }

    #[test]
    fn noise_flips_to_other_items() {
        let (ds, latent) = small();
        let mut p = VirtualParticipant::new("p", latent, &ds, 0.5, 1).unwrap();
        let answers: Vec<_> = (0..400).map(|_| p.answer(&q(0, 1, 2)).unwrap()).collect();
        let flipped = answers.iter().filter(|&&a| a != 2).count();
        assert!((150..250).contains(&flipped), "{flipped}");
        assert!(answers.contains(&0) && answers.contains(&1));
        assert!(VirtualParticipant::new("p", small().1, &ds, 1.0, 0).is_err());
    }

    #[test]
    fn unknown_items() {
        let (ds, latent) = small();
        let mut p = VirtualParticipant::new("p", latent.clone(), &ds, 0.0, 0).unwrap();
        assert!(matches!(p.answer(&q(0, 1, 99)), Err(Error::NotInLatent(99))));
        let other = Dataset::new(
            "o",
            vec![
                Item::new(0, vec![0.0]).with_labels(["fish"]),
                Item::new(1, vec![0.0]).with_labels(["cat"]),
                Item::new(2, vec![0.0]).with_labels(["dog"]),
            ],
        )
        .unwrap();
        assert!(matches!(
            VirtualParticipant::new("p", latent, &other, 0.0, 0),
            Err(Error::NotInLatent(0))
        ));
    }

    #[test]
    fn built_in_trees() {
        let trees: Vec<_> = (1..=3).map(|i| participant_tree(i).unwrap()).collect();
        let classes: std::collections::BTreeSet<String> = CLASSES.iter().map(|s| s.to_string()).collect();
        for t in &trees {
            assert_eq!(t.leaf_names(), classes);
            assert_eq!(t.depth(), 3);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let a: Vec<_> = trees[i].inner_concepts().into_iter().map(|c| c.1).collect();
                let b: Vec<_> = trees[j].inner_concepts().into_iter().map(|c| c.1).collect();
                assert!(a.iter().any(|c| !b.contains(c)));
            }
        }
        assert!(participant_tree(4).is_err());
    }

    #[test]
    fn participants_disagree_across_groupings() {
        let ds = generate_blobs(&participant_tree(1).unwrap(), 2, 4, 0).unwrap();
        let mut ps = standard_participants(&ds, 0.0, 0).unwrap();
        let find = |class: &str| ds.items().iter().find(|i| i.leaf_label() == Some(class)).unwrap().id;
        // Small animals for 1, mammals for 2, non-pets for 3.
        let question = q(find("cat"), find("frog"), find("horse"));
        let a: Vec<_> = ps.iter_mut().map(|p| p.answer(&question).unwrap()).collect();
        assert_eq!(a[0], find("horse"));
        assert_eq!(a[1], find("frog"));
        assert_eq!(a[2], find("cat"));
    }

    #[test]
    fn missing_class() {
        let tree = LatentHierarchy::new(LatentNode::branch("r", leaves(&["cat", "dog"]))).unwrap();
        let ds = generate_blobs(&tree, 2, 2, 0).unwrap();
        assert!(matches!(standard_participants(&ds, 0.0, 0), Err(Error::MissingClass(_))));
    }
}
