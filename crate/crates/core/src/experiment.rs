//! The elicitation loop, the ablation harness, and run reports.

mod ablation;
mod config;
mod report;
mod run;

pub use ablation::{run_ablation, AblationRow, AblationTable, Arm, ArmCurve};
pub use config::{
    DatasetRef, ExperimentConfig, MarginMode, ParticipantSpec, ParticipantTree, RunSettings,
    SelectionMode,
};
pub use report::{load_config, load_metrics, report, ExperimentMetrics, METRICS_SCHEMA_VERSION};
pub use run::{
    prepare, question_margin, run_elicitation, run_mixed, run_participant, ExperimentResult, IterationRecord,
    MixedMetrics, MixedRun, ParticipantRun, RunMetrics,
};
