use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{ExperimentResult, MixedMetrics, RunMetrics};
use crate::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub schema_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub runs: Vec<RunMetrics>,
    pub mixed: Option<MixedMetrics>,
}

impl ExperimentMetrics {
    pub fn from_result(result: &ExperimentResult) -> Self {
        Self {
            schema_version: METRICS_SCHEMA_VERSION,
            dataset: result.dataset_name.clone(),
            seed: result.config.settings.seed,
            runs: result.runs.iter().map(|r| r.metrics.clone()).collect(),
            mixed: result.mixed.as_ref().map(|m| m.metrics.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn curve_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("iteration,purity,pool_size,asked,node_count\n");
    for r in &metrics.iterations {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.purity, r.pool_size, r.asked, r.node_count
        ));
    }
    out
}

fn safe_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes a run directory:
///
/// ```text
/// config.json  metrics.json
/// <participant>/curve.csv tree.json leaves.csv pool.jsonl model.json
/// mixed/tree.json leaves.csv model.json        (several participants only)
/// ```
///
/// Rewriting the same result produces identical files.
pub fn report(result: &ExperimentResult, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error, p: &Path| Error::Checkpoint(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let write = |path: &Path, contents: &str| fs::write(path, contents).map_err(|e| io(e, path));
    write(&dir.join("config.json"), &result.config.to_json()?)?;
    write(&dir.join("metrics.json"), &ExperimentMetrics::from_result(result).to_json()?)?;
    for run in &result.runs {
        let sub = dir.join(safe_name(&run.metrics.participant));
        fs::create_dir_all(&sub).map_err(|e| io(e, &sub))?;
        write(&sub.join("curve.csv"), &curve_csv(&run.metrics))?;
        write(&sub.join("tree.json"), &run.final_tree().to_json()?)?;
        write(&sub.join("leaves.csv"), &run.final_tree().leaf_csv())?;
        write(&sub.join("model.json"), &run.model.to_json()?)?;
        run.pool.save_jsonl(&sub.join("pool.jsonl"))?;
    }
    if let Some(mixed) = &result.mixed {
        let sub = dir.join("mixed");
        fs::create_dir_all(&sub).map_err(|e| io(e, &sub))?;
        write(&sub.join("tree.json"), &mixed.tree.to_json()?)?;
        write(&sub.join("leaves.csv"), &mixed.tree.leaf_csv())?;
        write(&sub.join("model.json"), &mixed.model.to_json()?)?;
    }
    Ok(())
}

pub fn load_metrics(dir: &Path) -> Result<ExperimentMetrics> {
    let text = fs::read_to_string(dir.join("metrics.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads back the config a run directory was produced from.
pub fn load_config(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&fs::read_to_string(dir.join("config.json"))?)
}
