//! CSV datasets (`id,label_path,f0,...`), a JSON sidecar holding stimulus
//! descriptors keyed by id, and JSON latent hierarchies.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Item, LatentHierarchy, Stimulus};
use crate::{Error, ItemId, Result};

/// `data.csv` → `data.stimuli.json`.
pub fn stimuli_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("stimuli.json")
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label_path".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    writer.write_record(&header)?;
    for item in dataset.items() {
        let mut row = Vec::with_capacity(dataset.dim() + 2);
        row.push(item.id.to_string());
        row.push(item.label_path.as_ref().map(|p| p.join("/")).unwrap_or_default());
        row.extend(item.features.iter().map(f64::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;

    let stimuli: BTreeMap<ItemId, &Stimulus> = dataset
        .items()
        .iter()
        .filter_map(|i| i.stimulus.as_ref().map(|s| (i.id, s)))
        .collect();
    let sidecar = stimuli_sidecar_path(path);
    if stimuli.is_empty() {
        if sidecar.exists() {
            fs::remove_file(sidecar)?;
        }
    } else {
        fs::write(sidecar, serde_json::to_string_pretty(&stimuli)?)?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label_path" {
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(Error::NoItems);
        }
        return Err(Error::MalformedRow {
            row: 1,
            message: "header must start with `id,label_path`".into(),
        });
    }
    let dim = header.len() - 2;
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(items.len() + 2, |p| p.line() as usize);
        if record.len() != dim + 2 {
            return Err(Error::Dimension {
                row,
                expected: dim,
                found: record.len().saturating_sub(2),
            });
        }
        let id: ItemId = record[0].trim().parse().map_err(|e| Error::MalformedRow {
            row,
            message: format!("bad id `{}`: {e}", &record[0]),
        })?;
        if !seen.insert(id) {
            return Err(Error::DuplicateId { row, id });
        }
        let label_path = match record[1].trim() {
            "" => None,
            s => Some(s.split('/').map(str::to_owned).collect()),
        };
        let features = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|e| Error::MalformedRow {
                    row,
                    message: format!("bad feature `{v}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        items.push(Item {
            id,
            features,
            label_path,
            stimulus: None,
        });
    }
    if items.is_empty() {
        return Err(Error::NoItems);
    }

    let sidecar = stimuli_sidecar_path(path);
    if sidecar.exists() {
        let mut stimuli: BTreeMap<ItemId, Stimulus> =
            serde_json::from_str(&fs::read_to_string(&sidecar)?)?;
        for item in &mut items {
            item.stimulus = stimuli.remove(&item.id);
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, items)
}

pub fn save_latent(latent: &LatentHierarchy, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(latent)?)?;
    Ok(())
}

pub fn load_latent(path: &Path) -> Result<LatentHierarchy> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
