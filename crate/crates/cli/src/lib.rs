//! Command-line pipeline: dataset generation, training, analysis and latent-width sweeps.
//!
//! Every command resolves its configuration as defaults, then `--config <file>`, then
//! flags, and writes the result to `resolved_config.json` in its output directory.
//! Exit codes: 0 success, 1 usage or input error, 2 runtime or numerical failure.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use aenode_core::model::UpdateMode;
use clap::{Args, Parser, Subcommand};

use commands::analyze::{analyze, AnalyzeConfig, What};
use commands::gen_data::{gen_data, GenDataConfig};
use commands::sweep::{latent_sweep, SweepConfig};
use commands::train::{load_run_config, train, TrainRunConfig};
use config::{resolve, Overrides};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "aenode", version, about = "Autoencoder + neural ODE surrogates for stiff systems")]
pub struct Cli {
    /// JSON file with settings for the chosen subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; must not exist or be empty.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate an initial-condition sweep (or ingest CSVs) into a dataset directory.
    GenData(GenDataArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Information planes, DPI, phases, densities, stiffness and rollout errors of a run.
    Analyze(AnalyzeArgs),
    /// Train and compare one model per latent width.
    LatentSweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub system: Option<String>,
    /// start:stop:step, a,b,c or a single value (K).
    #[arg(long, allow_hyphen_values = true)]
    pub t_init: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Directory of trajectory CSVs to ingest.
    #[arg(long)]
    pub ingest: Option<PathBuf>,
    /// Integration horizon (s).
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub samples_per_traj: Option<usize>,
    #[arg(long)]
    pub densify_threshold: Option<f64>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub solver_steps: Option<usize>,
    #[arg(long)]
    pub time_input: Option<bool>,
    /// Loss weights of L1, L2, L3.
    #[arg(long, num_args = 3, value_names = ["L1", "L2", "L3"])]
    pub epsilon: Option<Vec<f64>>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long, value_parser = ["sequential", "summed"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub snapshot_limit: Option<usize>,
}

impl ModelFlags {
    fn apply(&self, o: &mut Overrides) {
        o.set("model.latent_dim", self.latent_dim);
        o.set("model.width", self.width);
        o.set("model.depth", self.depth);
        o.set("model.solver_steps", self.solver_steps);
        o.set("model.time_input", self.time_input);
        o.set("train.epsilon", self.epsilon.clone());
        o.set("train.learning_rate", self.learning_rate);
        o.set("train.lr_decay", self.lr_decay);
        o.set("train.batch_size", self.batch_size);
        o.set("train.epochs", self.epochs);
        o.set("train.max_iterations", self.max_iterations);
        o.set("train.eval_interval", self.eval_interval);
        o.set("train.mode", self.mode.as_ref().map(|m| if m == "summed" { UpdateMode::Summed } else { UpdateMode::Sequential }));
        o.set("train.snapshot_limit", self.snapshot_limit);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue an earlier run directory; its resolved configuration becomes the base.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub stop_after_passes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalysisFlags {
    #[arg(long)]
    pub probe_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub dpi_tolerance: Option<f64>,
    #[arg(long)]
    pub eval_points: Option<usize>,
}

impl AnalysisFlags {
    fn apply(&self, o: &mut Overrides) {
        o.set("analysis.mi.probe_size", self.probe_size);
        o.set("analysis.mi.alpha", self.alpha);
        o.set("analysis.max_epochs", self.max_epochs);
        o.set("analysis.dpi_tolerance", self.dpi_tolerance);
        o.set("analysis.eval_points", self.eval_points);
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Training run directory.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub what: Option<Vec<What>>,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub latent_dims: Option<Vec<usize>>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn validate_existing(path: &Option<PathBuf>, what: &str) -> CliResult<()> {
    match path {
        Some(p) if !p.exists() => Err(CliError::Usage(format!("{what} {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let file = cli.config.as_deref();
    let mut o = Overrides::default();
    o.set("seed", cli.seed);
    match &cli.command {
        Command::GenData(a) => {
            o.set("system", a.system.clone());
            o.set("t_init", a.t_init.clone());
            o.set("phi", a.phi.clone());
            o.set("ingest", a.ingest.clone());
            o.set("dataset.t_end", a.t_end);
            o.set("dataset.samples_per_traj", a.samples_per_traj);
            o.set("dataset.densify_threshold", a.densify_threshold);
            o.set("dataset.split_ratio", a.split_ratio);
            o.set("dataset.tol", a.tol);
            let cfg = resolve(&GenDataConfig::default(), file, o)?;
            validate_existing(&cfg.ingest, "ingest directory")?;
            let manifest = gen_data(&cfg, &out_dir(cli, "aenode-data"))?;
            println!("manifest hash {}", manifest.hash.unwrap_or_default());
        }
        Command::Train(a) => {
            o.set("data", a.data.clone());
            a.model.apply(&mut o);
            o.set("checkpoint_every", a.checkpoint_every);
            o.set("stop_after_passes", a.stop_after_passes);
            let base = match &a.resume {
                Some(run) => TrainRunConfig { stop_after_passes: None, ..load_run_config(run)? },
                None => TrainRunConfig::default(),
            };
            let cfg = resolve(&base, file, o)?;
            let summary = train(&cfg, a.resume.as_deref(), &out_dir(cli, "aenode-run"))?;
            println!(
                "{:?}: {} passes, {} iterations, {} accepted epochs",
                summary.status, summary.passes, summary.iterations, summary.accepted_epochs
            );
        }
        Command::Analyze(a) => {
            o.set("run", a.run.clone());
            o.set("data", a.data.clone());
            o.set("what", a.what.clone());
            a.analysis.apply(&mut o);
            let cfg = resolve(&AnalyzeConfig::default(), file, o)?;
            analyze(&cfg, &out_dir(cli, "aenode-analysis"))?;
        }
        Command::LatentSweep(a) => {
            o.set("data", a.data.clone());
            o.set("latent_dims", a.latent_dims.clone());
            a.model.apply(&mut o);
            a.analysis.apply(&mut o);
            let cfg = resolve(&SweepConfig::default(), file, o)?;
            let rows = latent_sweep(&cfg, &out_dir(cli, "aenode-sweep"))?;
            for r in &rows {
                match &r.error {
                    None => println!("N_L={} trained in {:.1}s", r.latent_dim, r.train_seconds),
                    Some(e) => println!("N_L={} failed: {e}", r.latent_dim),
                }
            }
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} latent widths, {failed} failed", rows.len());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

