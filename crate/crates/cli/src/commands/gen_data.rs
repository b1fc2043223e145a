use std::path::{Path, PathBuf};

use aenode_core::dynsys::{
    generate_snapshots, ignition_sweep, ingest_csv, Dataset, DatasetOptions, IgnitionParams, IgnitionSystem,
    InitialCondition, Robertson, StiffSystem, Trajectory,
};
use serde::{Deserialize, Serialize};

use crate::config::parse_grid;
use crate::data::{write_dataset, Manifest};
use crate::error::{CliError, CliResult};
use crate::output::{create_out_dir, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    /// `ignition` or `robertson`; ignored when ingesting.
    pub system: String,
    /// Initial temperatures, as `start:stop:step`, a list or one value.
    pub t_init: String,
    /// Mixture parameters, same syntax as `t_init`.
    pub phi: String,
    /// Directory of trajectory CSVs to ingest instead of integrating a system.
    pub ingest: Option<PathBuf>,
    pub ignition: IgnitionParams,
    pub dataset: DatasetOptions,
    pub seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            system: "ignition".into(),
            t_init: "1000:1200:20".into(),
            phi: "1.0".into(),
            ingest: None,
            ignition: IgnitionParams::default(),
            dataset: DatasetOptions::default(),
            seed: 0,
        }
    }
}

impl GenDataConfig {
    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions { seed: self.seed, ..self.dataset.clone() }
    }
}

fn ingest_dir(dir: &Path, config: &GenDataConfig) -> CliResult<(Dataset, Vec<Trajectory>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .csv files in {}", dir.display())));
    }
    let mut trajectories = Vec::new();
    for path in &files {
        let trs = ingest_csv(path).map_err(|source| CliError::Input { path: path.clone(), source })?;
        trajectories.extend(trs);
    }
    let dim = trajectories[0].dim();
    if let Some(k) = trajectories.iter().position(|t| t.dim() != dim) {
        return Err(CliError::Usage(format!("trajectory {k} has {} variables, expected {dim}", trajectories[k].dim())));
    }
    let system = trajectories[0].meta.get("system").cloned().unwrap_or_else(|| "ingested".into());
    let names = match system.as_str() {
        "ignition" => IgnitionSystem::default().variable_names(),
        "robertson" => Robertson.variable_names(),
        _ => (1..=dim).map(|i| format!("y{i}")).collect(),
    };
    if names.len() != dim {
        return Err(CliError::Usage(format!("system '{system}' has {} variables, files have {dim}", names.len())));
    }
    let horizon = trajectories.iter().map(|t| t.times[t.len() - 1] - t.times[0]).fold(0.0, f64::max);
    if !(horizon > 0.0) {
        return Err(CliError::Usage("ingested trajectories span no time".into()));
    }
    let dataset =
        Dataset::from_snapshots(&system, names, trajectories.clone(), horizon, config.dataset.split_ratio, config.seed)?;
    Ok((dataset, trajectories))
}

fn generated(system: &dyn StiffSystem, sweep: &[InitialCondition], opts: &DatasetOptions) -> CliResult<(Dataset, Vec<Trajectory>)> {
    let (norm, snapshots) = generate_snapshots(system, sweep, opts)?;
    let dataset = Dataset::with_normalization(
        system.name(),
        system.variable_names(),
        snapshots.clone(),
        norm,
        opts.t_end,
        opts.split_ratio,
        opts.seed,
    )?;
    Ok((dataset, snapshots))
}

/// Builds the dataset described by `config`, with its snapshots in physical units,
/// without writing anything.
pub fn build_dataset(config: &GenDataConfig) -> CliResult<(Dataset, Vec<Trajectory>)> {
    if let Some(dir) = &config.ingest {
        return ingest_dir(dir, config);
    }
    let opts = config.dataset_options();
    match config.system.as_str() {
        "ignition" => {
            let sweep = ignition_sweep(&parse_grid(&config.t_init)?, &parse_grid(&config.phi)?);
            generated(&IgnitionSystem::new(config.ignition), &sweep, &opts)
        }
        "robertson" => {
            let ic = InitialCondition { state: vec![1.0, 0.0, 0.0], meta: Default::default() };
            generated(&Robertson, &[ic], &opts)
        }
        other => Err(CliError::Usage(format!("unknown system '{other}'; expected ignition or robertson"))),
    }
}

pub fn gen_data(config: &GenDataConfig, out: &Path) -> CliResult<Manifest> {
    let (dataset, physical) = build_dataset(config)?;
    create_out_dir(out)?;
    write_json(&out.join("resolved_config.json"), config)?;
    let ignition = (dataset.system == "ignition").then_some(config.ignition);
    let manifest = write_dataset(out, &dataset, &physical, ignition)?;
    log::info!(
        "{} trajectories, {} pairs ({} train / {} test) written to {}",
        dataset.trajectories.len(),
        dataset.pairs.len(),
        dataset.train.len(),
        dataset.test.len(),
        out.display()
    );
    Ok(manifest)
}
