use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hke_core::dataset::{generate_shapes, save_dataset, save_latent, BlobConfig};
use hke_core::experiment::{
    load_config, prepare, report, run_ablation, run_elicitation, DatasetRef, ExperimentConfig,
    ParticipantSpec, ParticipantTree, RunSettings,
};
use hke_core::hierarchy::HierarchyTree;

use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "hke", version, about = "Hierarchical knowledge elicitation from odd-one-out judgments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulated elicitation experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Compare raw features, random, active and adaptive-margin elicitation.
    Ablate {
        /// `shapes[:seed]`, `blobs[:seed]` or a dataset CSV path.
        #[arg(long, default_value = "blobs")]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run settings JSON overriding the dataset's preset.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a participant's final tree from a run directory.
    ExportTree {
        #[arg(long)]
        run: PathBuf,
        /// Participant name, or `mixed`. Defaults to the first participant.
        #[arg(long)]
        participant: Option<String>,
        #[arg(long, value_enum, default_value_t = TreeFormat::Json)]
        format: TreeFormat,
    },
    /// Generate the synthetic shapes dataset as CSV plus its latent tree.
    GenShapes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API.
    Serve {
        /// `shapes[:seed]`, `blobs[:seed]` or a dataset CSV path.
        #[arg(long, default_value = "shapes")]
        dataset: String,
        /// Default run settings JSON for new sessions.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TreeFormat {
    Json,
    Csv,
}

pub fn main() -> Result<()> {
    execute(Cli::parse())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => run(&config, &out),
        Command::Ablate {
            dataset,
            seed,
            out,
            config,
        } => ablate(&dataset, seed, out.as_deref(), config.as_deref()),
        Command::ExportTree {
            run,
            participant,
            format,
        } => {
            print!("{}", export_tree(&run, participant.as_deref(), format)?);
            Ok(())
        }
        Command::GenShapes { seed, out } => gen_shapes(seed, &out),
        Command::Serve {
            dataset,
            config,
            port,
            data_dir,
        } => serve(&dataset, config.as_deref(), port, &data_dir),
    }
}

/// Sibling file holding the latent tree of a dataset CSV.
pub fn latent_path(csv: &Path) -> PathBuf {
    csv.with_extension("latent.json")
}

/// Parses `shapes[:seed]`, `blobs[:seed]` or a CSV path.
pub fn parse_dataset(arg: &str) -> Result<DatasetRef> {
    let (kind, seed) = match arg.split_once(':') {
        Some((k, s)) if k == "shapes" || k == "blobs" => {
            (k, s.parse::<u64>().with_context(|| format!("bad seed in `{arg}`"))?)
        }
        _ => (arg, 0),
    };
    Ok(match kind {
        "shapes" => DatasetRef::Shapes { seed },
        "blobs" => DatasetRef::Blobs(BlobConfig {
            seed,
            ..BlobConfig::default()
        }),
        path => {
            let path = PathBuf::from(path);
            if !path.is_file() {
                bail!("dataset `{arg}` is neither shapes, blobs nor an existing file");
            }
            let latent = Some(latent_path(&path)).filter(|p| p.is_file());
            DatasetRef::File { path, latent }
        }
    })
}

fn read_settings(path: &Path) -> Result<RunSettings> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let settings: RunSettings = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    settings.validate()?;
    Ok(settings)
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let config = ExperimentConfig::from_json(&text)?;
    let result = run_elicitation(&config)?;
    report(&result, out)?;
    for run in &result.runs {
        println!("{:<16} final purity {:.4}", run.metrics.participant, run.metrics.final_purity);
    }
    if let Some(mixed) = &result.mixed {
        println!("{:<16} purity {:.4}", "mixed", mixed.metrics.purity);
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Participants and preset used by `ablate` for a dataset.
pub fn ablation_setup(dataset: &DatasetRef, seed: u64) -> (Vec<ParticipantSpec>, RunSettings) {
    let (participants, settings) = match dataset {
        DatasetRef::Shapes { .. } => (
            vec![
                ParticipantSpec {
                    name: Some("shape_first".into()),
                    tree: ParticipantTree::Dataset,
                    noise: 0.0,
                },
                ParticipantSpec::shape_bias(),
            ],
            RunSettings::shapes(),
        ),
        _ => ((1..=3).map(ParticipantSpec::standard).collect(), RunSettings::default()),
    };
    (participants, RunSettings { seed, ..settings })
}

fn ablate(dataset: &str, seed: u64, out: Option<&Path>, settings: Option<&Path>) -> Result<()> {
    let dataset = parse_dataset(dataset)?;
    let (participants, mut run_settings) = ablation_setup(&dataset, seed);
    if let Some(path) = settings {
        run_settings = RunSettings {
            seed,
            ..read_settings(path)?
        };
    }
    let config = ExperimentConfig {
        dataset,
        participants,
        settings: run_settings,
    };
    config.validate()?;
    let (data, people) = prepare(&config)?;
    let table = run_ablation(&data, &people, &config.settings)?;
    print!("{}", table.summary());
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        fs::write(out.join("config.json"), config.to_json()?)?;
        fs::write(out.join("curves.csv"), table.curves_csv())?;
        fs::write(out.join("summary.txt"), table.summary())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn export_tree(run: &Path, participant: Option<&str>, format: TreeFormat) -> Result<String> {
    let name = match participant {
        Some(p) => p.to_owned(),
        None => {
            let config = load_config(run)?;
            let (dataset, people) = prepare(&config)?;
            drop(dataset);
            people
                .first()
                .map(|p| p.name().to_owned())
                .context("run has no participants")?
        }
    };
    let dir = run.join(&name);
    let path = dir.join("tree.json");
    let text = fs::read_to_string(&path).with_context(|| format!("no tree for `{name}` at {}", path.display()))?;
    let tree = HierarchyTree::from_json(&text)?;
    Ok(match format {
        TreeFormat::Json => tree.to_json()? + "\n",
        TreeFormat::Csv => tree.leaf_csv(),
    })
}

fn gen_shapes(seed: u64, out: &Path) -> Result<()> {
    let (dataset, latent) = generate_shapes(seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_dataset(&dataset, out)?;
    save_latent(&latent, &latent_path(out))?;
    println!("wrote {} items to {}", dataset.len(), out.display());
    Ok(())
}

fn serve(dataset: &str, config: Option<&Path>, port: u16, data_dir: &Path) -> Result<()> {
    let (data, _) = parse_dataset(dataset)?.load()?;
    let defaults = match config {
        Some(path) => read_settings(path)?,
        None if data.name().starts_with("shapes") => RunSettings::shapes(),
        None => RunSettings::default(),
    };
    let app = Arc::new(AppState::open(data, data_dir, defaults)?);
    eprintln!("{} session(s) loaded from {}", app.session_count(), data_dir.display());
    tokio::runtime::Runtime::new()?.block_on(service::serve(app, port))?;
    Ok(())
}
