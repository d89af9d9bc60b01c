use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dirichlet::{expected_max, variance_sum, DirichletStats};
use super::pool::{KnowledgePool, SignatureIndex};
use super::question::{cluster_signature, Question, QuestionSource};
use crate::hierarchy::HierarchyTree;
use crate::{Error, ItemId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Reject when the largest posterior mean exceeds this (`s_e`).
    #[serde(rename = "s_e")]
    pub confidence_threshold: f64,
    /// Reject when the summed posterior variance exceeds this (`s_v`).
    #[serde(rename = "s_v")]
    pub variance_threshold: f64,
    /// Similar answers needed before the variance test applies.
    pub min_variance_support: u64,
    /// Candidates proposed per kept question.
    pub oversampling: usize,
    /// Reserved for a nearest-neighbor notion of similar questions; must be
    /// `None`, leaf-cluster signatures are used.
    pub neighbors: Option<usize>,
    /// Dirichlet prior.
    pub prior: [f64; 3],
    /// Redraws allowed when a draw repeats an earlier question.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.8,
            variance_threshold: 0.2,
            min_variance_support: 6,
            oversampling: 4,
            neighbors: None,
            prior: [1.0; 3],
            max_retries: 20,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.confidence_threshold > 1.0 / 3.0 && self.confidence_threshold <= 1.0) {
            return bad(format!("s_e must lie in (1/3, 1], got {}", self.confidence_threshold));
        }
        if !(self.variance_threshold > 0.0) {
            return bad("s_v must be > 0".into());
        }
        if self.oversampling == 0 {
            return bad("oversampling must be >= 1".into());
        }
        if self.prior.iter().any(|a| !(*a > 0.0)) {
            return bad("Dirichlet prior must be positive".into());
        }
        if let Some(k) = self.neighbors {
            return bad(format!(
                "nearest-neighbor similarity (K_nn = {k}) is not available; leave it unset"
            ));
        }
        Ok(())
    }
}

fn draw_triple(members: &[ItemId], rng: &mut ChaCha8Rng) -> [ItemId; 3] {
    let idx = sample(rng, members.len(), 3);
    [members[idx.index(0)], members[idx.index(1)], members[idx.index(2)]]
}

/// Draws up to `count` questions round-robin over all tree nodes (pre-order,
/// root first), three distinct members uniformly per draw. Nodes with fewer
/// than three members are skipped. Draws repeating `exclude` or an earlier
/// proposal are redrawn up to `max_retries` times, then that turn is skipped.
pub fn propose_questions(
    tree: &HierarchyTree,
    count: usize,
    exclude: &HashSet<[ItemId; 3]>,
    max_retries: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Question>> {
    let nodes: Vec<_> = tree.nodes().filter(|n| n.members.len() >= 3).collect();
    if nodes.is_empty() {
        return Err(Error::NoProposableNode);
    }
    let mut out = Vec::with_capacity(count);
    let mut seen: HashSet<[ItemId; 3]> = HashSet::new();
    'rounds: while out.len() < count {
        let before = out.len();
        for node in &nodes {
            if out.len() == count {
                break 'rounds;
            }
            for _ in 0..=max_retries {
                let [a, b, c] = draw_triple(&node.members, rng);
                let q = Question::new(a, b, c, QuestionSource::Node(node.id))?;
                if !exclude.contains(&q.ids()) && seen.insert(q.ids()) {
                    out.push(q);
                    break;
                }
            }
        }
        if out.len() == before {
            break;
        }
    }
    Ok(out)
}

/// Up to `count` distinct uniformly random questions over `ids`, avoiding
/// `exclude`.
pub fn random_questions(
    ids: &[ItemId],
    count: usize,
    exclude: &HashSet<[ItemId; 3]>,
    max_retries: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Question>> {
    if ids.len() < 3 {
        return Err(Error::TooFewItems(ids.len()));
    }
    let mut out = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    let mut misses = 0;
    while out.len() < count && misses <= max_retries {
        let [a, b, c] = draw_triple(ids, rng);
        let q = Question::new(a, b, c, QuestionSource::Random)?;
        if !exclude.contains(&q.ids()) && seen.insert(q.ids()) {
            out.push(q);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    Ok(out)
}

fn question_seed(seed: u64, q: &Question) -> u64 {
    let [a, b, c] = q.ids().map(u64::from);
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 29)).wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 31)).wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z ^ (z >> 32)
}

/// Counts how often each slot of `question` was picked among similar answered
/// questions (those with the same leaf-cluster signature). An answer whose
/// leaf occurs in several slots is assigned to one of them uniformly at
/// random, seeded from `seed` and the question.
pub fn tally_similar(question: &Question, index: &SignatureIndex, seed: u64) -> Result<[u64; 3]> {
    let sig = cluster_signature(question, index.leaf_of())?;
    let mut counts = [0u64; 3];
    let Some(tallies) = index.tallies_for(&sig.key()) else {
        return Ok(counts);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(question_seed(seed, question));
    for (&leaf, &n) in tallies {
        let slots: Vec<usize> = (0..3).filter(|&s| sig.slots[s] == leaf).collect();
        match slots.len() {
            0 => {}
            1 => counts[slots[0]] += n,
            k => {
                for _ in 0..n {
                    counts[slots[rng.random_range(0..k)]] += 1;
                }
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    /// Similar questions were answered consistently; little to learn.
    RejectConfident,
    /// Similar questions were answered often yet inconsistently.
    RejectAmbiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionDecision {
    pub verdict: Verdict,
    pub counts: [u64; 3],
    pub expected_max: f64,
    pub variance_sum: f64,
}

/// Applies the confidence test, then the variance test (only once at least
/// `min_variance_support` similar answers exist).
pub fn reject(question: &Question, index: &SignatureIndex, config: &SelectionConfig) -> Result<RejectionDecision> {
    let counts = tally_similar(question, index, config.seed)?;
    Ok(decide(counts, config))
}

fn decide(counts: [u64; 3], config: &SelectionConfig) -> RejectionDecision {
    let stats = DirichletStats::new(config.prior, counts);
    let e = expected_max(&stats);
    let v = variance_sum(&stats);
    let verdict = if e > config.confidence_threshold {
        Verdict::RejectConfident
    } else if stats.total_counts() >= config.min_variance_support && v > config.variance_threshold {
        Verdict::RejectAmbiguous
    } else {
        Verdict::Keep
    };
    RejectionDecision {
        verdict,
        counts,
        expected_max: e,
        variance_sum: v,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub proposed: usize,
    pub kept: usize,
    pub rejected_confident: usize,
    pub rejected_ambiguous: usize,
    /// Random questions added because too few proposals survived.
    pub topped_up: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub questions: Vec<Question>,
    pub stats: SelectionStats,
}

/// Proposes `budget × oversampling` candidates over the tree, keeps the first
/// `budget` that pass [`reject`], and tops up with uniform random questions
/// when too few survive. Never returns a question `responder` already
/// answered.
pub fn select_batch(
    tree: &HierarchyTree,
    pool: &KnowledgePool,
    responder: &str,
    budget: usize,
    config: &SelectionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Selection> {
    config.validate()?;
    let mut exclude = pool.answered_by(responder);
    let index = pool.index(tree)?;
    let candidates = propose_questions(
        tree,
        budget * config.oversampling,
        &exclude,
        config.max_retries,
        rng,
    )?;
    let mut stats = SelectionStats {
        proposed: candidates.len(),
        ..SelectionStats::default()
    };
    let mut questions = Vec::with_capacity(budget);
    for q in candidates {
        if questions.len() == budget {
            break;
        }
        match reject(&q, &index, config)?.verdict {
            Verdict::Keep => questions.push(q),
            Verdict::RejectConfident => stats.rejected_confident += 1,
            Verdict::RejectAmbiguous => stats.rejected_ambiguous += 1,
        }
    }
    stats.kept = questions.len();
    if questions.len() < budget {
        exclude.extend(questions.iter().map(Question::ids));
        let extra = random_questions(
            &tree.root.members,
            budget - questions.len(),
            &exclude,
            config.max_retries.max(100),
            rng,
        )?;
        stats.topped_up = extra.len();
        questions.extend(extra);
    }
    Ok(Selection { questions, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::AnswerRecord;
    use crate::hierarchy::HierarchyNode;

    fn node(id: usize, members: std::ops::Range<ItemId>, children: Vec<HierarchyNode>) -> HierarchyNode {
        HierarchyNode {
            id,
            members: members.collect(),
            centroid: vec![],
            diversity: 0.0,
            majority_label: None,
            accuracy: None,
            children,
        }
    }

    fn two_leaf_tree() -> HierarchyTree {
        HierarchyTree {
            root: node(0, 0..100, vec![node(1, 0..50, vec![]), node(2, 50..100, vec![])]),
            snapshot: None,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn root_only_tree_gives_uniform_questions() {
        let tree = HierarchyTree {
            root: node(0, 0..30, vec![]),
            snapshot: None,
        };
        let qs = propose_questions(&tree, 10, &HashSet::new(), 20, &mut rng()).unwrap();
        assert_eq!(qs.len(), 10);
        assert!(qs.iter().all(|q| q.source == QuestionSource::Node(0)));
        assert_eq!(qs.iter().collect::<HashSet<_>>().len(), 10);
    }

    #[test]
    fn round_robin_over_nodes() {
        let qs = propose_questions(&two_leaf_tree(), 9, &HashSet::new(), 20, &mut rng()).unwrap();
        for id in 0..3 {
            let n = qs.iter().filter(|q| q.source == QuestionSource::Node(id)).count();
            assert_eq!(n, 3);
        }
        for q in &qs {
            if q.source == QuestionSource::Node(2) {
                assert!(q.ids().iter().all(|&i| i >= 50));
            }
        }
    }

    #[test]
    fn small_nodes_are_skipped() {
        let tree = HierarchyTree {
            root: node(0, 0..20, vec![node(1, 0..2, vec![]), node(2, 2..20, vec![])]),
            snapshot: None,
        };
        let qs = propose_questions(&tree, 10, &HashSet::new(), 20, &mut rng()).unwrap();
        assert_eq!(qs.len(), 10);
        assert!(qs.iter().all(|q| q.source != QuestionSource::Node(1)));
        let tiny = HierarchyTree {
            root: node(0, 0..2, vec![]),
            snapshot: None,
        };
        assert!(matches!(
            propose_questions(&tiny, 1, &HashSet::new(), 20, &mut rng()),
            Err(Error::NoProposableNode)
        ));
    }

    fn record(ids: [ItemId; 3], chosen: ItemId) -> AnswerRecord {
        let q = Question::new(ids[0], ids[1], ids[2], QuestionSource::Random).unwrap();
        AnswerRecord::new(&q, chosen, "p", 0.4, 0).unwrap()
    }

    #[test]
    fn tallies() {
        let tree = two_leaf_tree();
        let empty = KnowledgePool::new().index(&tree).unwrap();
        let q = Question::new(0, 1, 60, QuestionSource::Random).unwrap();
        assert_eq!(tally_similar(&q, &empty, 0).unwrap(), [0, 0, 0]);

        // Eight similar answers pick the leaf-2 item, one picks a leaf-1 item.
        let mut pool = KnowledgePool::new();
        for i in 0..8 {
            pool.add(record([2 + 2 * i, 3 + 2 * i, 70 + i], 70 + i)).unwrap();
        }
        pool.add(record([30, 31, 90], 30)).unwrap();
        // A non-matching signature.
        pool.add(record([60, 61, 62], 60)).unwrap();
        let index = pool.index(&tree).unwrap();
        assert_eq!(index.tally_total(), pool.len() as u64);
        let m = tally_similar(&q, &index, 0).unwrap();
        assert_eq!(m[2], 8);
        assert_eq!(m[0] + m[1], 1);
        let other = Question::new(10, 11, 12, QuestionSource::Random).unwrap();
        assert_eq!(tally_similar(&other, &index, 0).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn decisions() {
        let cfg = SelectionConfig::default();
        let fresh = decide([0, 0, 0], &cfg);
        assert_eq!(fresh.verdict, Verdict::Keep);
        assert_eq!((fresh.expected_max, fresh.variance_sum), (1.0 / 3.0, 1.0 / 6.0));
        assert_eq!(decide([8, 1, 0], &cfg).verdict, Verdict::Keep);
        let strict = SelectionConfig {
            confidence_threshold: 0.7,
            ..cfg.clone()
        };
        assert_eq!(decide([8, 1, 0], &strict).verdict, Verdict::RejectConfident);
        let d = decide([30, 0, 0], &cfg);
        assert_eq!(d.verdict, Verdict::RejectConfident);
        assert!((d.expected_max - 31.0 / 33.0).abs() < 1e-15);
        // The variance test needs support and a low enough threshold.
        let tight = SelectionConfig {
            variance_threshold: 0.05,
            ..cfg.clone()
        };
        assert_eq!(decide([2, 2, 1], &tight).verdict, Verdict::Keep);
        assert_eq!(decide([2, 2, 2], &tight).verdict, Verdict::RejectAmbiguous);
        assert_eq!(decide([2, 2, 2], &cfg).verdict, Verdict::Keep);
    }

    #[test]
    fn batch_with_empty_pool_keeps_first_proposals() {
        let tree = two_leaf_tree();
        let cfg = SelectionConfig::default();
        let budget = 12;
        let sel = select_batch(&tree, &KnowledgePool::new(), "p", budget, &cfg, &mut rng()).unwrap();
        let proposals = propose_questions(&tree, 48, &HashSet::new(), 20, &mut rng()).unwrap();
        assert_eq!(sel.questions, proposals[..12].to_vec());
        assert_eq!(sel.stats.topped_up, 0);
    }

    #[test]
    fn saturated_signature_is_rejected() {
        let tree = two_leaf_tree();
        let mut pool = KnowledgePool::new();
        // 50 consistent answers: two leaf-1 items with a leaf-2 odd one out.
        for i in 0..25 {
            pool.add(record([i, i + 25, 50 + i], 50 + i)).unwrap();
            pool.add(record([i, i + 24, 51 + i], 51 + i)).unwrap();
        }
        assert_eq!(pool.len(), 50);
        let cfg = SelectionConfig::default();
        let budget = 60;
        let sel = select_batch(&tree, &pool, "p", budget, &cfg, &mut rng()).unwrap();
        assert!(sel.stats.rejected_confident > 0);
        let index = pool.index(&tree).unwrap();
        let leaf_of = index.leaf_of();
        for q in sel.questions.iter().filter(|q| q.source != QuestionSource::Random) {
            let mut key = cluster_signature(q, leaf_of).unwrap().key();
            key.sort();
            assert_ne!(key, [1, 1, 2]);
        }
        let answered = pool.answered_by("p");
        assert!(sel.questions.iter().all(|q| !answered.contains(&q.ids())));
    }

    #[test]
    fn budget_is_exact_when_filter_starves() {
        let tree = two_leaf_tree();
        let mut pool = KnowledgePool::new();
        for i in 0..25 {
            pool.add(record([i, i + 25, 50 + i], 50 + i)).unwrap();
            pool.add(record([50 + i, 75 + i, i], i)).unwrap();
        }
        let cfg = SelectionConfig {
            oversampling: 1,
            confidence_threshold: 0.4,
            ..SelectionConfig::default()
        };
        let sel = select_batch(&tree, &pool, "p", 600, &cfg, &mut rng()).unwrap();
        assert!(sel.stats.topped_up > 0);
        assert_eq!(sel.stats.kept + sel.stats.topped_up, 600);
        assert_eq!(sel.questions.len(), 600);
        assert_eq!(sel.questions.iter().collect::<HashSet<_>>().len(), 600);
    }

    #[test]
    fn rejection_is_deterministic() {
        let tree = two_leaf_tree();
        let mut pool = KnowledgePool::new();
        for i in 0..20 {
            pool.add(record([i, i + 1, i + 2], i)).unwrap();
        }
        let index = pool.index(&tree).unwrap();
        let cfg = SelectionConfig::default();
        let q = Question::new(5, 17, 33, QuestionSource::Random).unwrap();
        assert_eq!(reject(&q, &index, &cfg).unwrap(), reject(&q, &index, &cfg).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        let low = SelectionConfig {
            confidence_threshold: 0.3,
            ..SelectionConfig::default()
        };
        assert!(low.validate().is_err());
        let knn = SelectionConfig {
            neighbors: Some(5),
            ..SelectionConfig::default()
        };
        assert!(knn.validate().is_err());
    }
}
