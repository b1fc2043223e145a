use std::path::{Path, PathBuf};

use aenode_core::dynsys::Dataset;
use aenode_core::model::{AENodeModel, Checkpoint, ModelConfig, Scaling, TrainConfig, TrainState, TrainStatus};
use serde::{Deserialize, Serialize};

use crate::data::load_dataset;
use crate::error::{CliError, CliResult};
use crate::output::{create_out_dir, write_json, write_text};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "training_log.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    /// Dataset directory written by `gen-data`.
    pub data: Option<PathBuf>,
    /// Seeds both the weight initialisation and the minibatch shuffles.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Passes between checkpoint writes.
    pub checkpoint_every: usize,
    /// Stop once this many passes are done, leaving a resumable checkpoint.
    pub stop_after_passes: Option<usize>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            checkpoint_every: 10,
            stop_after_passes: None,
        }
    }
}

impl TrainRunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn data_dir(&self) -> CliResult<&Path> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("no dataset given; pass --data <dir>".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub status: TrainStatus,
    pub passes: usize,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub accepted_epochs: usize,
    pub final_test_loss: Option<f64>,
    pub parameters: usize,
}

/// Trains (or continues `resume`) on an already loaded dataset and writes the run files into `out`.
pub fn train_on(
    config: &TrainRunConfig,
    dataset: &Dataset,
    resume: Option<Checkpoint>,
    out: &Path,
) -> CliResult<(Checkpoint, TrainSummary)> {
    let tc = config.train_config();
    tc.validate()?;
    if config.checkpoint_every == 0 {
        return Err(CliError::Usage("checkpoint_every must be positive".into()));
    }
    let scaling = Scaling::of(dataset);
    let mut state = match resume {
        Some(ck) => {
            if ck.scaling != scaling {
                return Err(CliError::Usage("checkpoint was trained on a different dataset".into()));
            }
            ck.state()?
        }
        None => {
            let mc = ModelConfig { physical_dim: dataset.dim(), ..config.model.clone() };
            TrainState::new(AENodeModel::new(mc, config.seed)?, &tc)?
        }
    };
    create_out_dir(out)?;
    write_json(&out.join(RESOLVED_CONFIG_FILE), config)?;

    let mut hook = |a: &aenode_core::model::AcceptedEpoch, _: &AENodeModel| {
        log::info!("accepted epoch {} after pass {} (test loss {:.6})", a.epoch, a.pass, a.test_loss);
    };
    let save = |state: &TrainState| -> CliResult<Checkpoint> {
        let ck = Checkpoint::new(state, &scaling, &tc);
        ck.save(&out.join(CHECKPOINT_FILE))?;
        write_text(&out.join(LOG_FILE), &state.history.log_csv())?;
        Ok(ck)
    };
    save(&state)?;
    let ck = loop {
        let mut target = state.passes_done + config.checkpoint_every;
        if let Some(stop) = config.stop_after_passes {
            target = target.min(stop);
        }
        let before = (state.passes_done, state.history.evaluations.len());
        state.run(dataset, &tc, &mut hook, Some(target))?;
        let ck = save(&state)?;
        let done = state.history.status != TrainStatus::Running;
        let stopped = config.stop_after_passes.is_some_and(|s| state.passes_done >= s);
        if done || stopped || before == (state.passes_done, state.history.evaluations.len()) {
            break ck;
        }
    };
    let summary = TrainSummary {
        status: state.history.status,
        passes: state.passes_done,
        iterations: state.iteration,
        rejected_steps: state.history.rejected_steps(),
        accepted_epochs: state.history.accepted.len(),
        final_test_loss: state.history.final_epoch().map(|a| a.test_loss),
        parameters: state.model.n_params(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok((ck, summary))
}

/// Configuration of a finished or interrupted run directory.
pub fn load_run_config(run: &Path) -> CliResult<TrainRunConfig> {
    let path = run.join(RESOLVED_CONFIG_FILE);
    if !path.is_file() {
        return Err(CliError::Usage(format!("{} is not a training run (no {RESOLVED_CONFIG_FILE})", run.display())));
    }
    crate::output::read_json(&path)
}

pub fn load_checkpoint(run: &Path) -> CliResult<Checkpoint> {
    let path = run.join(CHECKPOINT_FILE);
    if !path.is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}", path.display())));
    }
    Checkpoint::load(&path).map_err(|source| CliError::Input { path, source })
}

pub fn train(config: &TrainRunConfig, resume: Option<&Path>, out: &Path) -> CliResult<TrainSummary> {
    let (_, dataset) = load_dataset(config.data_dir()?)?;
    let checkpoint = resume.map(load_checkpoint).transpose()?;
    train_on(config, &dataset, checkpoint, out).map(|(_, s)| s)
}
