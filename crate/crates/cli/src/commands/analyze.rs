use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aenode_core::dynsys::{integrate_reference, Dataset, IgnitionSystem, StiffSystem, Trajectory};
use aenode_core::infometrics::{
    bimodality_gap, check_dpi, detect_phases, info_planes, ip1_rows, ip2_rows, kde_pdf, padded_grid,
    silverman_bandwidth, DpiViolation, InfoPlaneRecord, MIConfig, MiPoint, PhaseOptions, PhaseReport,
    DEFAULT_DPI_TOLERANCE,
};
use aenode_core::model::{
    predict_trajectory, rrmse, stiffness_report, AENodeModel, Checkpoint, LatentStepping, Scaling, StiffnessOptions,
    StiffnessReport,
};
use clap::ValueEnum;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{load_checkpoint, load_run_config};
use crate::data::{load_dataset, Manifest};
use crate::error::{CliError, CliResult};
use crate::output::{cell, create_out_dir, write_json, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum What {
    Mi,
    Dpi,
    Phases,
    Pdf,
    Stiffness,
    Rrmse,
    All,
}

/// Settings shared by `analyze` and `latent-sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub mi: MIConfig,
    pub dpi_tolerance: f64,
    pub phases: PhaseOptions,
    /// Most accepted epochs evaluated for the information planes; the store is thinned evenly.
    pub max_epochs: usize,
    /// Held-out `(initial temperature, mixture)` pairs for rollouts of the ignition system.
    pub eval_ics: Vec<[f64; 2]>,
    /// Output times per rollout, uniform over the dataset horizon.
    pub eval_points: usize,
    pub latent_steps_per_interval: usize,
    pub reference_tol: f64,
    pub stiffness: StiffnessOptions,
    pub pdf_points: usize,
    /// Uniform-in-time samples per dataset trajectory feeding the densities.
    pub pdf_samples_per_trajectory: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            mi: MIConfig::default(),
            dpi_tolerance: DEFAULT_DPI_TOLERANCE,
            phases: PhaseOptions::default(),
            max_epochs: 40,
            eval_ics: vec![[1010.0, 0.83], [1090.0, 1.02], [1170.0, 1.17], [1130.0, 0.91]],
            eval_points: 201,
            latent_steps_per_interval: 2,
            reference_tol: 1e-6,
            stiffness: StiffnessOptions::default(),
            pdf_points: 256,
            pdf_samples_per_trajectory: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Training run directory.
    pub run: Option<PathBuf>,
    /// Dataset directory; defaults to the one the run was trained on.
    pub data: Option<PathBuf>,
    pub what: Vec<What>,
    /// Seeds the probe-set selection.
    pub seed: u64,
    pub analysis: AnalysisSettings,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { run: None, data: None, what: vec![What::All], seed: 0, analysis: AnalysisSettings::default() }
    }
}

impl AnalyzeConfig {
    fn wants(&self, w: What) -> bool {
        self.what.contains(&w) || self.what.contains(&What::All)
    }
}

/// A fixed probe set: `size` normalised states drawn from the test pairs, as columns.
pub fn probe_matrix(dataset: &Dataset, size: usize, seed: u64) -> CliResult<DMatrix<f64>> {
    let mut states: Vec<&Vec<f64>> = dataset
        .test
        .iter()
        .map(|&p| {
            let pair = dataset.pairs[p];
            &dataset.trajectories[pair.traj].states[pair.index]
        })
        .collect();
    if states.len() < size {
        return Err(CliError::Usage(format!("probe size {size} exceeds the {} test states", states.len())));
    }
    states.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dim = dataset.dim();
    Ok(DMatrix::from_fn(dim, size, |i, j| states[j][i]))
}

/// Reference trajectories (physical units) used for rollouts and stiffness: fresh held-out
/// initial conditions for the ignition system, the dataset trajectories otherwise.
pub fn evaluation_references(
    manifest: &Manifest,
    dataset: &Dataset,
    settings: &AnalysisSettings,
) -> CliResult<Vec<Trajectory>> {
    if manifest.system == "ignition" && !settings.eval_ics.is_empty() {
        let system = IgnitionSystem::new(manifest.ignition.unwrap_or_default());
        let horizon = manifest.time_scale;
        settings
            .eval_ics
            .iter()
            .map(|&[t_init, phi]| {
                let mut tr =
                    integrate_reference(&system, &IgnitionSystem::initial_state(t_init, phi), horizon, settings.reference_tol)?;
                tr.meta = BTreeMap::from([("t_init".into(), t_init.to_string()), ("phi".into(), phi.to_string())]);
                Ok(tr)
            })
            .collect()
    } else {
        log::warn!("no held-out initial conditions for system '{}'; evaluating on dataset trajectories", manifest.system);
        Ok((0..dataset.trajectories.len()).map(|i| dataset.physical_trajectory(i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutErrors {
    pub variable_names: Vec<String>,
    /// Per-reference RRMSE (%) of each variable; `None` where the truth is zero or the rollout failed.
    pub per_trajectory: Vec<Vec<Option<f64>>>,
    pub labels: Vec<String>,
    /// Mean over references.
    pub mean: Vec<Option<f64>>,
}

/// Full rollouts from each reference's initial state, compared on a uniform grid.
pub fn rollout_errors(
    model: &AENodeModel,
    scaling: &Scaling,
    references: &[Trajectory],
    names: &[String],
    settings: &AnalysisSettings,
) -> CliResult<RolloutErrors> {
    let n = settings.eval_points.max(2);
    let mut per = Vec::with_capacity(references.len());
    let mut labels = Vec::new();
    for tr in references {
        let (t0, t1) = (tr.times[0], tr.times[tr.len() - 1]);
        let grid: Vec<f64> = (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect();
        let truth: Vec<Vec<f64>> = grid.iter().map(|&t| tr.interpolate(t)).collect();
        let stepping = LatentStepping::PerInterval(settings.latent_steps_per_interval.max(1));
        let row = match predict_trajectory(model, scaling, &tr.states[0], &grid, stepping) {
            Ok(p) => rrmse(&p.physical.states, &truth)?,
            Err(e) => {
                log::warn!("rollout failed: {e}");
                vec![None; tr.dim()]
            }
        };
        per.push(row);
        labels.push(tr.meta.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "));
    }
    let dim = names.len();
    let mean = (0..dim)
        .map(|i| {
            let vals: Option<Vec<f64>> = per.iter().map(|r| r[i]).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(RolloutErrors { variable_names: names.to_vec(), per_trajectory: per, labels, mean })
}

/// Table with one row per latent width and one column per variable.
pub fn rrmse_table(names: &[String], rows: &[(usize, Vec<Option<f64>>)]) -> String {
    let mut out = String::from("N_L");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (nl, vals) in rows {
        let _ = write!(out, "{nl}");
        for v in vals {
            let _ = write!(out, ",{}", cell(*v));
        }
        out.push('\n');
    }
    out
}

/// Snapshot epochs to evaluate: all of them, or an even thinning that keeps the first and last.
pub fn select_epochs(available: usize, max_epochs: usize) -> Vec<usize> {
    if available <= max_epochs.max(2) {
        return (0..available).collect();
    }
    let m = max_epochs.max(2);
    let mut idx: Vec<usize> = (0..m).map(|k| (k * (available - 1) + (m - 1) / 2) / (m - 1)).collect();
    idx.dedup();
    idx
}

/// Information-plane records for the selected accepted epochs of a checkpoint.
pub fn plane_records(
    checkpoint: &Checkpoint,
    probe: &DMatrix<f64>,
    settings: &AnalysisSettings,
    final_only: bool,
) -> CliResult<Vec<InfoPlaneRecord>> {
    let snaps = &checkpoint.history.snapshots;
    if snaps.is_empty() {
        return Err(CliError::Usage(
            "the run has no accepted-epoch snapshots; retrain with snapshots enabled (snapshot_limit >= 2)".into(),
        ));
    }
    let chosen = if final_only { vec![snaps.len() - 1] } else { select_epochs(snaps.len(), settings.max_epochs) };
    let models = chosen
        .iter()
        .map(|&k| Ok((snaps[k].epoch, snaps[k].model()?)))
        .collect::<aenode_core::Result<Vec<_>>>()?;
    Ok(info_planes(&models, probe, &settings.mi)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiReport {
    pub tolerance: f64,
    pub final_epoch: usize,
    /// Violations at the final accepted epoch.
    pub violations: Vec<DpiViolation>,
    /// `(epoch, number of violations)` over every evaluated epoch.
    pub per_epoch: Vec<(usize, usize)>,
}

pub fn dpi_report(records: &[InfoPlaneRecord], tolerance: f64) -> DpiReport {
    let last = records.last().expect("at least one record");
    DpiReport {
        tolerance,
        final_epoch: last.epoch,
        violations: check_dpi(last, tolerance),
        per_epoch: records.iter().map(|r| (r.epoch, check_dpi(r, tolerance).len())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPhases {
    pub stack: String,
    pub layer: usize,
    pub report: PhaseReport,
}

pub fn phase_reports(records: &[InfoPlaneRecord], options: &PhaseOptions) -> Vec<LayerPhases> {
    let Some(first) = records.first() else { return Vec::new() };
    let curve = |f: &dyn Fn(&InfoPlaneRecord) -> MiPoint| records.iter().map(f).collect::<Vec<_>>();
    let mut out = Vec::new();
    for l in 0..first.encoder.len() {
        let report = detect_phases(&curve(&|r| r.encoder[l]), options);
        out.push(LayerPhases { stack: "encoder".into(), layer: l + 1, report });
    }
    for l in 0..first.decoder.len() {
        let report = detect_phases(&curve(&|r| r.decoder[l]), options);
        out.push(LayerPhases { stack: "decoder".into(), layer: l + 1, report });
    }
    let report = detect_phases(&curve(&|r| r.bottleneck), options);
    out.push(LayerPhases { stack: "bottleneck".into(), layer: first.encoder.len() + 1, report });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    /// `physical` (normalised units) or `latent`.
    pub space: String,
    pub variable: String,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub bimodality_gap: f64,
}

impl Density {
    pub fn csv(&self) -> String {
        let mut out = String::from("grid,density,space,variable\n");
        for (g, d) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(out, "{g},{d},{},{}", self.space, self.variable);
        }
        out
    }
}

fn density_of(samples: &[f64], space: &str, variable: &str, points: usize) -> CliResult<Density> {
    let bandwidth = silverman_bandwidth(samples)?;
    let grid = padded_grid(samples, 3.0 * bandwidth, points);
    let density = kde_pdf(samples, bandwidth, &grid)?;
    Ok(Density {
        space: space.into(),
        variable: variable.into(),
        bimodality_gap: bimodality_gap(&density),
        grid,
        density,
        bandwidth,
    })
}

/// Densities of every normalised physical variable and every latent coordinate over the
/// dataset trajectories sampled uniformly in time.
pub fn densities(model: &AENodeModel, dataset: &Dataset, settings: &AnalysisSettings) -> CliResult<Vec<Density>> {
    let m = settings.pdf_samples_per_trajectory.max(2);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for tr in &dataset.trajectories {
        let (t0, t1) = (tr.times[0], tr.times[tr.len() - 1]);
        rows.extend((0..m).map(|k| tr.interpolate(t0 + (t1 - t0) * k as f64 / (m - 1) as f64)));
    }
    let y = DMatrix::from_fn(dataset.dim(), rows.len(), |i, j| rows[j][i]);
    let z = model.encode(&y)?;
    let mut out = Vec::new();
    for (i, name) in dataset.variable_names.iter().enumerate() {
        if dataset.norm.degenerate[i] {
            continue;
        }
        out.push(density_of(&y.row(i).iter().copied().collect::<Vec<_>>(), "physical", name, settings.pdf_points)?);
    }
    for i in 0..z.nrows() {
        let samples: Vec<f64> = z.row(i).iter().copied().collect();
        out.push(density_of(&samples, "latent", &format!("z{}", i + 1), settings.pdf_points)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessSummary {
    pub report: StiffnessReport,
    /// Latent coarse step over the largest stable physical step.
    pub step_ratio: f64,
    pub coarse_step_stable: bool,
    /// Max normalised physical derivative over max normalised latent derivative.
    pub derivative_ratio: f64,
}

pub fn stiffness_summary(
    model: &AENodeModel,
    scaling: &Scaling,
    system: &dyn StiffSystem,
    references: &[Trajectory],
    options: &StiffnessOptions,
) -> CliResult<StiffnessSummary> {
    let report = stiffness_report(model, scaling, system, references, options)?;
    Ok(StiffnessSummary {
        step_ratio: report.latent_step / report.physical_stable_step,
        coarse_step_stable: report.coarse_step_stable(),
        derivative_ratio: report.derivative_ratio(),
        report,
    })
}

/// Everything `analyze` computed, also written to disk.
#[derive(Debug, Clone, Default)]
pub struct AnalysisReport {
    pub records: Vec<InfoPlaneRecord>,
    pub dpi: Option<DpiReport>,
    pub phases: Option<Vec<LayerPhases>>,
    pub densities: Option<Vec<Density>>,
    pub stiffness: Option<StiffnessSummary>,
    pub rrmse: Option<RolloutErrors>,
}

fn ip_csvs(records: &[InfoPlaneRecord]) -> (String, String) {
    let mut ip1 = String::from("epoch,stack,layer,I_in,I_out\n");
    for (e, s, l, a, b) in ip1_rows(records) {
        let _ = writeln!(ip1, "{e},{s},{l},{a},{b}");
    }
    let mut ip2 = String::from("epoch,depth,I_pair,bound_low,bound_high\n");
    for (e, d, v, lo, hi) in ip2_rows(records) {
        let _ = writeln!(ip2, "{e},{d},{v},{lo},{hi}");
    }
    (ip1, ip2)
}

pub fn analyze(config: &AnalyzeConfig, out: &Path) -> CliResult<AnalysisReport> {
    let run = config.run.as_deref().ok_or_else(|| CliError::Usage("no training run given; pass --run <dir>".into()))?;
    let checkpoint = load_checkpoint(run)?;
    let data_dir = match &config.data {
        Some(d) => d.clone(),
        None => load_run_config(run)?.data_dir()?.to_path_buf(),
    };
    let (manifest, dataset) = load_dataset(&data_dir)?;
    if checkpoint.scaling != Scaling::of(&dataset) {
        return Err(CliError::Usage("the run was trained on a different dataset".into()));
    }
    let model = checkpoint.model()?;
    let scaling = checkpoint.scaling.clone();
    let s = &config.analysis;
    create_out_dir(out)?;
    write_json(&out.join("resolved_config.json"), config)?;
    let mut report = AnalysisReport::default();

    let need_planes = config.wants(What::Mi) || config.wants(What::Phases);
    if need_planes || config.wants(What::Dpi) {
        let probe = probe_matrix(&dataset, s.mi.probe_size, config.seed)?;
        report.records = plane_records(&checkpoint, &probe, s, !need_planes)?;
    }
    if config.wants(What::Mi) {
        let (ip1, ip2) = ip_csvs(&report.records);
        write_text(&out.join("ip1.csv"), &ip1)?;
        write_text(&out.join("ip2.csv"), &ip2)?;
    }
    if config.wants(What::Dpi) {
        let dpi = dpi_report(&report.records, s.dpi_tolerance);
        write_json(&out.join("dpi.json"), &dpi)?;
        report.dpi = Some(dpi);
    }
    if config.wants(What::Phases) {
        let phases = phase_reports(&report.records, &s.phases);
        write_json(&out.join("phases.json"), &phases)?;
        report.phases = Some(phases);
    }
    if config.wants(What::Pdf) {
        let dens = densities(&model, &dataset, s)?;
        let mut gaps: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for d in &dens {
            write_text(&out.join(format!("pdf_{}_{}.csv", d.space, d.variable)), &d.csv())?;
            gaps.entry(d.space.clone()).or_default().insert(d.variable.clone(), d.bimodality_gap);
        }
        write_json(&out.join("bimodality.json"), &gaps)?;
        report.densities = Some(dens);
    }
    let references = if config.wants(What::Rrmse) || config.wants(What::Stiffness) {
        evaluation_references(&manifest, &dataset, s)?
    } else {
        Vec::new()
    };
    if config.wants(What::Rrmse) {
        let errs = rollout_errors(&model, &scaling, &references, &dataset.variable_names, s)?;
        write_text(&out.join("rrmse.csv"), &rrmse_table(&errs.variable_names, &[(model.latent_dim(), errs.mean.clone())]))?;
        let mut by = String::from("reference");
        for n in &errs.variable_names {
            let _ = write!(by, ",{n}");
        }
        by.push('\n');
        for (label, row) in errs.labels.iter().zip(&errs.per_trajectory) {
            let _ = write!(by, "{label}");
            for v in row {
                let _ = write!(by, ",{}", cell(*v));
            }
            by.push('\n');
        }
        write_text(&out.join("rrmse_by_reference.csv"), &by)?;
        report.rrmse = Some(errs);
    }
    if config.wants(What::Stiffness) {
        let system = manifest.system().ok_or_else(|| {
            CliError::Usage(format!("stiffness analysis needs a built-in system, dataset has '{}'", manifest.system))
        })?;
        let st = stiffness_summary(&model, &scaling, system.as_ref(), &references, &s.stiffness)?;
        write_json(&out.join("stiffness.json"), &st)?;
        report.stiffness = Some(st);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_thinning_keeps_ends() {
        assert_eq!(select_epochs(5, 40), vec![0, 1, 2, 3, 4]);
        let s = select_epochs(101, 5);
        assert_eq!(s, vec![0, 25, 50, 75, 100]);
        let s = select_epochs(100, 7);
        assert_eq!((s[0], *s.last().unwrap(), s.len()), (0, 99, 7));
    }

    #[test]
    fn perfect_predictions_give_zero_table() {
        let truth = vec![vec![1.0, 2.0, 0.5], vec![1.5, 2.5, 0.25]];
        let row = rrmse(&truth, &truth).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(rrmse_table(&names, &[(3, row)]), "N_L,a,b,c\n3,0,0,0\n");
    }

    #[test]
    fn density_csv_layout() {
        let d = density_of(&[0.0, 0.1, 0.2, 0.9, 1.0], "physical", "temperature", 16).unwrap();
        let csv = d.csv();
        assert!(csv.starts_with("grid,density,space,variable\n"));
        assert_eq!(csv.lines().count(), 17);
        assert!(csv.lines().nth(1).unwrap().ends_with(",physical,temperature"));
    }
}
