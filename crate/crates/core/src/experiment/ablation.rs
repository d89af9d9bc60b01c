use serde::{Deserialize, Serialize};

use super::config::{MarginMode, RunSettings, SelectionMode};
use super::run::run_participant;
use crate::dataset::Dataset;
use crate::embedding::Embeddings;
use crate::hierarchy::{build_hierarchy, dendrogram_purity, HierarchyConfig};
use crate::participants::VirtualParticipant;
use crate::{derive_seed, par, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Divisive clustering of the raw features; no answers used.
    RawFeatures,
    RandomFixed,
    ActiveFixed,
    ActiveAdaptive,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::RawFeatures, Arm::RandomFixed, Arm::ActiveFixed, Arm::ActiveAdaptive];

    pub fn name(self) -> &'static str {
        match self {
            Arm::RawFeatures => "raw_features",
            Arm::RandomFixed => "random_fixed",
            Arm::ActiveFixed => "active_fixed",
            Arm::ActiveAdaptive => "active_adaptive",
        }
    }

    fn modes(self) -> Option<(SelectionMode, MarginMode)> {
        match self {
            Arm::RawFeatures => None,
            Arm::RandomFixed => Some((SelectionMode::Random, MarginMode::Fixed)),
            Arm::ActiveFixed => Some((SelectionMode::Active, MarginMode::Fixed)),
            Arm::ActiveAdaptive => Some((SelectionMode::Active, MarginMode::Adaptive)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurve {
    pub arm: Arm,
    /// Purity after each round; constant for the raw-feature arm.
    pub purities: Vec<f64>,
    pub final_purity: f64,
    /// Answers consumed.
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub participant: String,
    pub arms: Vec<ArmCurve>,
}

impl AblationRow {
    pub fn arm(&self, arm: Arm) -> Option<&ArmCurve> {
        self.arms.iter().find(|c| c.arm == arm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Long-format curves: `participant,arm,iteration,purity`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("participant,arm,iteration,purity\n");
        for row in &self.rows {
            for curve in &row.arms {
                for (i, p) in curve.purities.iter().enumerate() {
                    out.push_str(&format!("{},{},{},{}\n", row.participant, curve.arm.name(), i, p));
                }
            }
        }
        out
    }

    /// Final purities as a plain-text table, one row per participant.
    pub fn summary(&self) -> String {
        let mut out = format!("{:<16}", "participant");
        for arm in Arm::ALL {
            out.push_str(&format!("{:>17}", arm.name()));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<16}", row.participant));
            for arm in Arm::ALL {
                match row.arm(arm) {
                    Some(c) => out.push_str(&format!("{:>17.4}", c.final_purity)),
                    None => out.push_str(&format!("{:>17}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the four arms for every participant on the same question budget.
/// The trained arms share their initial questions and initial model, so
/// they differ only in how later questions are chosen and weighted.
pub fn run_ablation(
    dataset: &Dataset,
    participants: &[VirtualParticipant],
    settings: &RunSettings,
) -> Result<AblationTable> {
    settings.validate()?;
    let raw_config = HierarchyConfig {
        seed: derive_seed(settings.seed, 5_000),
        ..settings.hierarchy.clone()
    };
    let raw_tree = build_hierarchy(&Embeddings::from_features(dataset), &raw_config)?;

    let jobs: Vec<(usize, Arm)> = (0..participants.len())
        .flat_map(|p| Arm::ALL.into_iter().map(move |a| (p, a)))
        .collect();
    let curves = par::map(&jobs, |&(p, arm)| -> Result<ArmCurve> {
        let participant = &participants[p];
        match arm.modes() {
            None => {
                let purity = dendrogram_purity(&raw_tree, &participant.leaf_labels())?;
                Ok(ArmCurve {
                    arm,
                    purities: vec![purity; settings.iterations + 1],
                    final_purity: purity,
                    questions: 0,
                })
            }
            Some((selection_mode, margin_mode)) => {
                let arm_settings = RunSettings {
                    selection_mode,
                    margin_mode,
                    ..settings.clone()
                };
                let run = run_participant(dataset, participant, p as u64, &arm_settings)?;
                Ok(ArmCurve {
                    arm,
                    purities: run.metrics.purity_curve(),
                    final_purity: run.metrics.final_purity,
                    questions: run.pool.len(),
                })
            }
        }
    });
    let mut curves = curves.into_iter();
    let mut rows = Vec::with_capacity(participants.len());
    for participant in participants {
        let arms = curves.by_ref().take(Arm::ALL.len()).collect::<Result<Vec<_>>>()?;
        rows.push(AblationRow {
            participant: participant.name().to_owned(),
            arms,
        });
    }
    Ok(AblationTable {
        dataset: dataset.name().to_owned(),
        seed: settings.seed,
        rows,
    })
}
