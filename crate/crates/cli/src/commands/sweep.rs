use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aenode_core::dynsys::Dataset;
use aenode_core::infometrics::DpiChain;
use aenode_core::model::{ModelConfig, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analyze::{
    dpi_report, evaluation_references, plane_records, probe_matrix, rollout_errors, rrmse_table, AnalysisSettings,
    DpiReport,
};
use super::train::{train_on, TrainRunConfig, TrainSummary};
use crate::data::{load_dataset, Manifest};
use crate::error::{CliError, CliResult};
use crate::output::{cell, create_out_dir, write_json, write_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub latent_dims: Vec<usize>,
    /// Shared architecture; `latent_dim` is replaced per row.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            latent_dims: vec![1, 2, 3, 4],
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            analysis: AnalysisSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub latent_dim: usize,
    pub train: Option<TrainSummary>,
    /// Mean rollout RRMSE (%) per variable.
    pub rrmse: Option<Vec<Option<f64>>>,
    pub dpi: Option<DpiReport>,
    pub error: Option<String>,
    /// Wall time of the training run; reported but never written, so output files stay reproducible.
    #[serde(skip)]
    pub train_seconds: f64,
}

impl SweepRow {
    pub fn violations(&self, chain: DpiChain) -> Option<usize> {
        self.dpi.as_ref().map(|d| d.violations.iter().filter(|v| v.chain == chain).count())
    }
}

fn run_one(
    config: &SweepConfig,
    manifest: &Manifest,
    dataset: &Dataset,
    latent_dim: usize,
    out: &Path,
) -> CliResult<SweepRow> {
    let run_cfg = TrainRunConfig {
        data: config.data.clone(),
        seed: config.seed,
        model: ModelConfig { latent_dim, ..config.model.clone() },
        train: config.train.clone(),
        checkpoint_every: config.train.epochs.max(1),
        stop_after_passes: None,
    };
    let start = std::time::Instant::now();
    let (ck, summary) = train_on(&run_cfg, dataset, None, out)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let model = ck.model()?;
    let s = &config.analysis;
    let references = evaluation_references(manifest, dataset, s)?;
    let errs = rollout_errors(&model, &ck.scaling, &references, &dataset.variable_names, s)?;
    let probe = probe_matrix(dataset, s.mi.probe_size, config.seed)?;
    let records = plane_records(&ck, &probe, s, true)?;
    let dpi = dpi_report(&records, s.dpi_tolerance);
    write_json(&out.join("dpi.json"), &dpi)?;
    write_text(&out.join("rrmse.csv"), &rrmse_table(&errs.variable_names, &[(latent_dim, errs.mean.clone())]))?;
    Ok(SweepRow { latent_dim, train: Some(summary), rrmse: Some(errs.mean), dpi: Some(dpi), error: None, train_seconds })
}

pub fn summary_csv(names: &[String], rows: &[SweepRow]) -> String {
    let mut out = String::from("N_L,status");
    for n in names {
        let _ = write!(out, ",rrmse_{n}");
    }
    out.push_str(",dpi_1a,dpi_1b,dpi_2,error\n");
    for r in rows {
        let status = r.train.as_ref().map(|t| serde_json::to_value(t.status).expect("status")).map(|v| {
            v.as_str().unwrap_or_default().to_string()
        });
        let _ = write!(out, "{},{}", r.latent_dim, status.unwrap_or_else(|| "failed".into()));
        for i in 0..names.len() {
            let _ = write!(out, ",{}", cell(r.rrmse.as_ref().and_then(|v| v[i])));
        }
        for chain in [DpiChain::Encoder, DpiChain::Decoder, DpiChain::LayerPairs] {
            let _ = write!(out, ",{}", r.violations(chain).map(|c| c.to_string()).unwrap_or_default());
        }
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(out, ",{err}");
    }
    out
}

/// Trains one model per latent width on a shared dataset and seed. A failing row is
/// recorded and the sweep continues.
pub fn latent_sweep(config: &SweepConfig, out: &Path) -> CliResult<Vec<SweepRow>> {
    if config.latent_dims.is_empty() {
        return Err(CliError::Usage("latent_dims is empty".into()));
    }
    let data_dir = config.data.as_deref().ok_or_else(|| CliError::Usage("no dataset given; pass --data <dir>".into()))?;
    let (manifest, dataset) = load_dataset(data_dir)?;
    create_out_dir(out)?;
    write_json(&out.join("resolved_config.json"), config)?;
    let rows: Vec<SweepRow> = config
        .latent_dims
        .par_iter()
        .map(|&nl| {
            let dir = out.join(format!("nl_{nl}"));
            run_one(config, &manifest, &dataset, nl, &dir).unwrap_or_else(|e| {
                log::warn!("latent width {nl} failed: {e}");
                SweepRow { latent_dim: nl, train: None, rrmse: None, dpi: None, error: Some(e.to_string()), train_seconds: 0.0 }
            })
        })
        .collect();
    write_text(&out.join("summary.csv"), &summary_csv(&dataset.variable_names, &rows))?;
    write_json(&out.join("summary.json"), &rows)?;
    Ok(rows)
}
