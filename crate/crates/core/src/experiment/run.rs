use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MarginMode, RunSettings, SelectionMode};
use crate::dataset::Dataset;
use crate::elicitation::{
    random_questions, select_batch, AnswerRecord, KnowledgePool, Question, QuestionSource,
    SelectionStats,
};
use crate::embedding::{adaptive_margin, embed_all, train, AnsweredTriplet, EmbeddingModel};
use crate::hierarchy::{build_hierarchy, dendrogram_purity, HierarchyConfig, HierarchyTree};
use crate::participants::VirtualParticipant;
use crate::{derive_seed, par, Error, Result};

// Sub-stream offsets for derive_seed.
const PARTICIPANT_STREAM: u64 = 1_000;
const MODEL_STREAM: u64 = 2_000;
const QUESTION_STREAM: u64 = 3_000;
const TRAIN_STREAM: u64 = 4_000;
const TREE_STREAM: u64 = 5_000;
const SELECT_STREAM: u64 = 6_000;
const MIXED_STREAM: u64 = 7_000;

/// Metrics of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub purity: f64,
    /// Answers in the pool after this round.
    pub pool_size: usize,
    /// Questions asked this round.
    pub asked: usize,
    pub mean_margin: f64,
    /// Rejection counts; absent for rounds with random questions.
    pub selection: Option<SelectionStats>,
    /// Mean loss per triplet after each training epoch.
    pub epoch_losses: Vec<f64>,
    pub node_count: usize,
    pub tree_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub participant: String,
    pub seed: u64,
    pub selection_mode: SelectionMode,
    pub margin_mode: MarginMode,
    /// Round 0 is the initial random batch.
    pub iterations: Vec<IterationRecord>,
    pub final_purity: f64,
}

impl RunMetrics {
    pub fn purity_curve(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.purity).collect()
    }
}

/// Everything one participant's run produced.
#[derive(Debug, Clone)]
pub struct ParticipantRun {
    pub metrics: RunMetrics,
    /// The tree after each round, annotated with the participant's leaves.
    pub trees: Vec<HierarchyTree>,
    pub pool: KnowledgePool,
    pub model: EmbeddingModel,
}

impl ParticipantRun {
    pub fn final_tree(&self) -> &HierarchyTree {
        self.trees.last().expect("a run has at least one round")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedMetrics {
    pub participants: Vec<String>,
    pub pool_size: usize,
    /// Against the dataset's own leaf labels.
    pub purity: f64,
    pub epoch_losses: Vec<f64>,
    pub node_count: usize,
    pub tree_depth: usize,
}

/// A model trained on the union of several participants' answers.
#[derive(Debug, Clone)]
pub struct MixedRun {
    pub metrics: MixedMetrics,
    pub tree: HierarchyTree,
    pub pool: KnowledgePool,
    pub model: EmbeddingModel,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub dataset_name: String,
    pub runs: Vec<ParticipantRun>,
    /// Present when the config lists more than one participant.
    pub mixed: Option<MixedRun>,
}

/// Loads the dataset and builds the configured participants.
pub fn prepare(config: &ExperimentConfig) -> Result<(Dataset, Vec<VirtualParticipant>)> {
    config.validate()?;
    let (dataset, latent) = config.dataset.load()?;
    let participants = config
        .participants
        .iter()
        .enumerate()
        .map(|(i, p)| p.build(&dataset, latent.as_ref(), i))
        .collect::<Result<Vec<_>>>()?;
    Ok((dataset, participants))
}

/// Runs every configured participant and, when there are several, trains
/// on their merged answers as well.
pub fn run_elicitation(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let (dataset, participants) = prepare(config)?;
    let slots: Vec<usize> = (0..participants.len()).collect();
    let runs = par::map(&slots, |&i| {
        run_participant(&dataset, &participants[i], i as u64, &config.settings)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mixed = if runs.len() > 1 {
        Some(run_mixed(&dataset, &runs, &config.settings)?)
    } else {
        None
    };
    Ok(ExperimentResult {
        config: config.clone(),
        dataset_name: dataset.name().to_owned(),
        runs,
        mixed,
    })
}

fn train_config(settings: &RunSettings, stream: u64) -> crate::embedding::TrainConfig {
    crate::embedding::TrainConfig {
        seed: derive_seed(settings.seed, stream),
        ..settings.train.clone()
    }
}

fn hierarchy_config(settings: &RunSettings, stream: u64) -> HierarchyConfig {
    HierarchyConfig {
        seed: derive_seed(settings.seed, stream),
        ..settings.hierarchy.clone()
    }
}

fn fresh_model(dataset: &Dataset, settings: &RunSettings, slot: u64) -> Result<EmbeddingModel> {
    EmbeddingModel::for_dataset(
        dataset,
        &settings.train.hidden,
        settings.train.embedding_dim,
        derive_seed(settings.seed, MODEL_STREAM + slot),
    )
}

fn tree_for(
    model: &EmbeddingModel,
    dataset: &Dataset,
    config: &HierarchyConfig,
) -> Result<HierarchyTree> {
    build_hierarchy(&embed_all(model, dataset)?, config)
}

/// One participant through the initial round and `settings.iterations`
/// selection rounds. `slot` separates the random streams of participants
/// sharing a seed; runs with equal slots and seeds start identically.
pub fn run_participant(
    dataset: &Dataset,
    participant: &VirtualParticipant,
    slot: u64,
    settings: &RunSettings,
) -> Result<ParticipantRun> {
    settings.validate()?;
    let mut participant = participant.clone();
    participant.reseed(derive_seed(settings.seed, PARTICIPANT_STREAM + slot));
    let responder = participant.name().to_owned();
    let labels = participant.leaf_labels();
    let ids = dataset.ids();
    let mut question_rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, QUESTION_STREAM + slot));
    let mut model = fresh_model(dataset, settings, slot)?;
    let mut pool = KnowledgePool::new();
    let mut triplets: Vec<AnsweredTriplet> = Vec::with_capacity(settings.total_questions());
    let mut records = Vec::with_capacity(settings.iterations + 1);
    let mut trees: Vec<HierarchyTree> = Vec::with_capacity(settings.iterations + 1);

    for iteration in 0..=settings.iterations {
        let mut step = || -> Result<()> {
            let (questions, selection) = if iteration == 0 {
                let qs = random_questions(
                    &ids,
                    settings.initial,
                    &HashSet::new(),
                    settings.selection.max_retries.max(100),
                    &mut question_rng,
                )?;
                (qs, None)
            } else {
                let tree = trees.last().expect("tree from previous round");
                match settings.selection_mode {
                    SelectionMode::Random => {
                        let qs = random_questions(
                            &ids,
                            settings.budget,
                            &pool.answered_by(&responder),
                            settings.selection.max_retries.max(100),
                            &mut question_rng,
                        )?;
                        (qs, None)
                    }
                    SelectionMode::Active => {
                        let cfg = crate::elicitation::SelectionConfig {
                            seed: derive_seed(settings.seed, SELECT_STREAM + iteration as u64),
                            ..settings.selection.clone()
                        };
                        let sel = select_batch(tree, &pool, &responder, settings.budget, &cfg, &mut question_rng)?;
                        (sel.questions, Some(sel.stats))
                    }
                }
            };

            let mut margin_sum = 0.0;
            for q in &questions {
                let margin = question_margin(q, trees.last(), settings);
                margin_sum += margin;
                let chosen = participant.answer(q)?;
                let record = AnswerRecord::new(q, chosen, &responder, margin, iteration)?;
                let [p1, p2] = record.positives();
                triplets.push(AnsweredTriplet::new(p1, p2, chosen, margin)?);
                pool.add(record)?;
            }

            if iteration > 0 && !settings.warm_start {
                model = fresh_model(dataset, settings, slot)?;
            }
            let report = train(
                &mut model,
                &triplets,
                dataset,
                &train_config(settings, TRAIN_STREAM + iteration as u64),
            )?;
            let mut tree = tree_for(&model, dataset, &hierarchy_config(settings, TREE_STREAM + iteration as u64))?;
            tree.annotate(&labels);
            let purity = dendrogram_purity(&tree, &labels)?;
            records.push(IterationRecord {
                iteration,
                purity,
                pool_size: pool.len(),
                asked: questions.len(),
                mean_margin: if questions.is_empty() { 0.0 } else { margin_sum / questions.len() as f64 },
                selection,
                epoch_losses: report.epoch_losses,
                node_count: tree.node_count(),
                tree_depth: tree.depth(),
            });
            trees.push(tree);
            Ok(())
        };
        step().map_err(|e| Error::Iteration {
            iteration,
            source: Box::new(e),
        })?;
    }

    let final_purity = records.last().map_or(0.0, |r| r.purity);
    Ok(ParticipantRun {
        metrics: RunMetrics {
            participant: responder,
            seed: settings.seed,
            selection_mode: settings.selection_mode,
            margin_mode: settings.margin_mode,
            iterations: records,
            final_purity,
        },
        trees,
        pool,
        model,
    })
}

/// Margin of a question: the fixed margin before any tree exists or in
/// fixed mode, otherwise the adaptive margin of its source node. Random
/// questions count as drawn from the root.
pub fn question_margin(q: &Question, tree: Option<&HierarchyTree>, settings: &RunSettings) -> f64 {
    let tree = match (settings.margin_mode, tree) {
        (MarginMode::Adaptive, Some(t)) => t,
        _ => return settings.train.fixed_margin,
    };
    let diversity = match q.source {
        QuestionSource::Node(id) => tree.node(id).map_or(tree.root.diversity, |n| n.diversity),
        QuestionSource::Random => tree.root.diversity,
    };
    adaptive_margin(settings.train.margin_base, settings.train.margin_gain, diversity)
}

/// Trains a fresh model on the union of the runs' answers, keeping each
/// answer's recorded margin, and evaluates it against the dataset's leaf
/// labels.
pub fn run_mixed(dataset: &Dataset, runs: &[ParticipantRun], settings: &RunSettings) -> Result<MixedRun> {
    let pool = KnowledgePool::merged(runs.iter().map(|r| &r.pool));
    let triplets = pool
        .records()
        .iter()
        .map(|r| {
            let [p1, p2] = r.positives();
            AnsweredTriplet::new(p1, p2, r.chosen, r.margin)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = fresh_model(dataset, settings, MIXED_STREAM)?;
    let report = train(&mut model, &triplets, dataset, &train_config(settings, MIXED_STREAM))?;
    let labels = dataset.labels(None);
    let mut tree = tree_for(&model, dataset, &hierarchy_config(settings, MIXED_STREAM))?;
    tree.annotate(&labels);
    let purity = dendrogram_purity(&tree, &labels)?;
    Ok(MixedRun {
        metrics: MixedMetrics {
            participants: runs.iter().map(|r| r.metrics.participant.clone()).collect(),
            pool_size: pool.len(),
            purity,
            epoch_losses: report.epoch_losses,
            node_count: tree.node_count(),
            tree_depth: tree.depth(),
        },
        tree,
        pool,
        model,
    })
}
