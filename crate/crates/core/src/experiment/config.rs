use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_blobs_with, generate_shapes, load_dataset, load_latent, shape_bias_hierarchy,
    BlobConfig, Dataset, LatentHierarchy,
};
use crate::elicitation::SelectionConfig;
use crate::embedding::TrainConfig;
use crate::hierarchy::HierarchyConfig;
use crate::participants::{participant_tree, VirtualParticipant};
use crate::{Error, Result};

/// Where the items come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRef {
    /// The 135-item geometric shape set.
    Shapes {
        #[serde(default)]
        seed: u64,
    },
    /// Gaussian blobs over the ten classes, laid out along built-in
    /// participant 1's tree.
    Blobs(BlobConfig),
    /// A CSV written by `save_dataset`, with an optional latent tree JSON.
    File {
        path: PathBuf,
        #[serde(default)]
        latent: Option<PathBuf>,
    },
}

impl DatasetRef {
    /// Loads the dataset and the ground-truth tree it carries, if any.
    pub fn load(&self) -> Result<(Dataset, Option<LatentHierarchy>)> {
        match self {
            DatasetRef::Shapes { seed } => {
                let (ds, latent) = generate_shapes(*seed)?;
                Ok((ds, Some(latent)))
            }
            DatasetRef::Blobs(cfg) => {
                let tree = participant_tree(1)?;
                Ok((generate_blobs_with(&tree, cfg)?, Some(tree)))
            }
            DatasetRef::File { path, latent } => {
                let ds = load_dataset(path)?;
                let latent = match latent {
                    Some(p) => Some(load_latent(p)?),
                    None => labels_tree(&ds).ok(),
                };
                Ok((ds, latent))
            }
        }
    }
}

fn labels_tree(dataset: &Dataset) -> Result<LatentHierarchy> {
    let paths: Vec<&[String]> = dataset
        .items()
        .iter()
        .filter_map(|i| i.label_path.as_deref())
        .collect();
    if paths.len() != dataset.len() {
        return Err(Error::InvalidConfig("dataset items are unlabeled".into()));
    }
    LatentHierarchy::from_label_paths(dataset.name(), paths)
}

/// The concept tree a simulated participant answers from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tree", rename_all = "snake_case")]
pub enum ParticipantTree {
    /// Built-in participant 1, 2 or 3 over the ten classes.
    Standard { index: usize },
    /// Shape, then deformation, then thickness.
    ShapeBias,
    /// The tree implied by the dataset's own label paths.
    Dataset,
    File { path: PathBuf },
    Inline { root: LatentHierarchy },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub tree: ParticipantTree,
    /// Probability of replacing an answer with a random other item.
    #[serde(default)]
    pub noise: f64,
}

impl ParticipantSpec {
    pub fn standard(index: usize) -> Self {
        Self {
            name: None,
            tree: ParticipantTree::Standard { index },
            noise: 0.0,
        }
    }

    pub fn shape_bias() -> Self {
        Self {
            name: None,
            tree: ParticipantTree::ShapeBias,
            noise: 0.0,
        }
    }

    fn default_name(&self, position: usize) -> String {
        match &self.tree {
            ParticipantTree::Standard { index } => format!("participant{index}"),
            ParticipantTree::ShapeBias => "shape_bias".into(),
            _ => format!("participant{}", position + 1),
        }
    }

    /// Builds the participant; the run seeds it before use.
    pub fn build(
        &self,
        dataset: &Dataset,
        dataset_latent: Option<&LatentHierarchy>,
        position: usize,
    ) -> Result<VirtualParticipant> {
        let latent = match &self.tree {
            ParticipantTree::Standard { index } => participant_tree(*index)?,
            ParticipantTree::ShapeBias => shape_bias_hierarchy(),
            ParticipantTree::Dataset => match dataset_latent {
                Some(l) => l.clone(),
                None => labels_tree(dataset)?,
            },
            ParticipantTree::File { path } => load_latent(path)?,
            ParticipantTree::Inline { root } => root.clone(),
        };
        let name = self.name.clone().unwrap_or_else(|| self.default_name(position));
        VirtualParticipant::new(name, latent, dataset, self.noise, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Uniformly random questions.
    Random,
    /// Per-node proposals filtered by the Dirichlet rejection rule.
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Every question uses the fixed margin.
    Fixed,
    /// `margin_base + margin_gain · d_H` of the node the question came from.
    Adaptive,
}

/// Everything about a run except the data and the responders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    /// Random questions asked before the first hierarchy exists.
    pub initial: usize,
    /// Selection rounds after the initial one.
    pub iterations: usize,
    /// Questions per selection round.
    pub budget: usize,
    pub selection_mode: SelectionMode,
    pub margin_mode: MarginMode,
    /// Keep training the previous model each round instead of
    /// reinitializing it.
    pub warm_start: bool,
    pub seed: u64,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub hierarchy: HierarchyConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            initial: 1000,
            iterations: 4,
            budget: 600,
            selection_mode: SelectionMode::Active,
            margin_mode: MarginMode::Adaptive,
            warm_start: true,
            seed: 0,
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            hierarchy: HierarchyConfig::default(),
        }
    }
}

impl RunSettings {
    /// The shape protocol: 300 initial questions at margin 0.2, then five
    /// rounds of 300.
    pub fn shapes() -> Self {
        Self {
            initial: 300,
            iterations: 5,
            budget: 300,
            train: TrainConfig {
                fixed_margin: 0.2,
                hidden: vec![32],
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    /// Total questions one participant answers.
    pub fn total_questions(&self) -> usize {
        self.initial + self.iterations * self.budget
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.initial == 0 {
            return bad("initial must be >= 1");
        }
        if self.iterations > 0 && self.budget == 0 {
            return bad("budget must be >= 1");
        }
        self.train.validate()?;
        self.selection.validate()
    }
}

/// A full run description, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    pub participants: Vec<ParticipantSpec>,
    #[serde(flatten)]
    pub settings: RunSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.participants.is_empty() {
            return Err(Error::InvalidConfig("at least one participant is required".into()));
        }
        self.settings.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
