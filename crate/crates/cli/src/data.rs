//! Dataset directories: a manifest plus one CSV per trajectory in physical units.

use std::path::{Path, PathBuf};

use aenode_core::dynsys::{
    format_trajectory, parse_trajectories, Dataset, IgnitionParams, IgnitionSystem, Normalization, Robertson,
    StiffSystem, Trajectory,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{read_json, read_text, sha256_hex, to_json, write_text};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub file: String,
    pub sha256: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub system: String,
    pub variable_names: Vec<String>,
    /// Rate constants when the data came from the built-in ignition system.
    pub ignition: Option<IgnitionParams>,
    pub normalization: Normalization,
    /// Seconds per unit of normalised time; also the integration horizon of generated data.
    pub time_scale: f64,
    pub split_ratio: f64,
    pub seed: u64,
    pub pairs: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub trajectories: Vec<TrajectoryEntry>,
    /// SHA-256 of this manifest serialised with `hash` unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
}

impl Manifest {
    fn compute_hash(&self) -> String {
        let mut bare = self.clone();
        bare.hash = None;
        sha256_hex(to_json(&bare).as_bytes())
    }

    /// The dynamical system behind the data, when it is a built-in one.
    pub fn system(&self) -> Option<Box<dyn StiffSystem>> {
        match self.system.as_str() {
            "ignition" => Some(Box::new(IgnitionSystem::new(self.ignition.unwrap_or_default()))),
            "robertson" => Some(Box::new(Robertson)),
            _ => None,
        }
    }
}

/// Writes the physical snapshot trajectories behind `dataset` and its manifest.
pub fn write_dataset(
    dir: &Path,
    dataset: &Dataset,
    physical: &[Trajectory],
    ignition: Option<IgnitionParams>,
) -> CliResult<Manifest> {
    if physical.len() != dataset.trajectories.len() {
        return Err(CliError::Usage("snapshot and dataset trajectory counts differ".into()));
    }
    let traj_dir = dir.join("trajectories");
    std::fs::create_dir_all(&traj_dir).map_err(CliError::io(&traj_dir))?;
    let mut entries = Vec::with_capacity(dataset.trajectories.len());
    for (i, tr) in physical.iter().enumerate() {
        let text = format_trajectory(&dataset.system, tr);
        let file = format!("trajectories/traj_{i:04}.csv");
        write_text(&dir.join(&file), &text)?;
        entries.push(TrajectoryEntry { file, sha256: sha256_hex(text.as_bytes()), points: tr.len() });
    }
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT,
        system: dataset.system.clone(),
        variable_names: dataset.variable_names.clone(),
        ignition,
        normalization: dataset.norm.clone(),
        time_scale: dataset.time_scale,
        split_ratio: dataset.split_ratio,
        seed: dataset.seed,
        pairs: dataset.pairs.len(),
        train_pairs: dataset.train.len(),
        test_pairs: dataset.test.len(),
        trajectories: entries,
        hash: None,
    };
    manifest.hash = Some(manifest.compute_hash());
    write_text(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(manifest)
}

/// Loads a dataset directory, checking every file against the manifest.
pub fn load_dataset(dir: &Path) -> CliResult<(Manifest, Dataset)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CliError::Usage(format!(
            "no dataset manifest at {}; run gen-data first",
            manifest_path.display()
        )));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(CliError::Usage(format!("unsupported manifest format {}", manifest.format)));
    }
    if manifest.hash.as_deref() != Some(manifest.compute_hash().as_str()) {
        return Err(CliError::Usage(format!("{} does not match its recorded hash", manifest_path.display())));
    }
    let mut snapshots = Vec::with_capacity(manifest.trajectories.len());
    for entry in &manifest.trajectories {
        let path: PathBuf = dir.join(&entry.file);
        let text = read_text(&path)?;
        if sha256_hex(text.as_bytes()) != entry.sha256 {
            return Err(CliError::Usage(format!("{} does not match the manifest checksum", path.display())));
        }
        let mut trs = parse_trajectories(&text).map_err(|source| CliError::Input { path: path.clone(), source })?;
        if trs.len() != 1 {
            return Err(CliError::Usage(format!("{} holds {} trajectories, expected 1", path.display(), trs.len())));
        }
        snapshots.push(trs.remove(0));
    }
    let dataset = Dataset::with_normalization(
        &manifest.system,
        manifest.variable_names.clone(),
        snapshots,
        manifest.normalization.clone(),
        manifest.time_scale,
        manifest.split_ratio,
        manifest.seed,
    )?;
    Ok((manifest, dataset))
}
