use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{l1_gradient, l2_gradient, l3_gradient, loss_components, LossComponents, LossGradient, PairMatrices};
use super::network::{AENodeModel, ModelRecord};
use crate::dynsys::Dataset;
use crate::error::{Error, Result};
use crate::net::{AdamConfig, AdamState, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// One Adam update per loss term, in the order L1, L2, L3.
    Sequential,
    /// One Adam update on the weighted sum of the three gradients.
    Summed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weights of L1, L2, L3.
    pub epsilon: [f64; 3],
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every pass.
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Budget of passes over the training pairs.
    pub epochs: usize,
    pub max_iterations: Option<usize>,
    /// Iterations between test evaluations; `None` evaluates after every pass.
    pub eval_interval: Option<usize>,
    pub probe_size: usize,
    pub seed: u64,
    pub mode: UpdateMode,
    /// Most parameter snapshots kept; older ones are thinned uniformly.
    pub snapshot_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: [1.0, 1.0, 1.0],
            learning_rate: 3e-3,
            lr_decay: 0.98,
            batch_size: 32,
            epochs: 300,
            max_iterations: None,
            eval_interval: None,
            probe_size: 512,
            seed: 0,
            mode: UpdateMode::Sequential,
            snapshot_limit: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got {:?}", self.epsilon)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("learning-rate decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.eval_interval == Some(0) {
            return Err(Error::Config("evaluation interval must be positive".into()));
        }
        if self.probe_size < 8 {
            return Err(Error::Config(format!("probe size must be at least 8, got {}", self.probe_size)));
        }
        if self.snapshot_limit < 2 {
            return Err(Error::Config("snapshot limit must be at least 2".into()));
        }
        Ok(())
    }
}

/// One Adam state per network, shared by the sub-updates that touch it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub encoder: AdamState,
    pub node: AdamState,
    pub decoder: AdamState,
}

impl Optimizers {
    fn set_learning_rate(&mut self, lr: f64) {
        for s in [&mut self.encoder, &mut self.node, &mut self.decoder] {
            s.config.learning_rate = lr;
        }
    }

    pub fn new(model: &AENodeModel, config: &TrainConfig) -> Self {
        let cfg = AdamConfig { learning_rate: config.learning_rate, ..Default::default() };
        Self {
            encoder: AdamState::new(&model.encoder, cfg),
            node: AdamState::new(&model.node, cfg),
            decoder: AdamState::new(&model.decoder, cfg),
        }
    }
}

/// Losses seen by one iteration; `None` marks a term with zero weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub pass: usize,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    /// Non-finite loss or divergence; parameters were restored.
    pub rejected: bool,
}

fn apply(opt: &mut Optimizers, model: &mut AENodeModel, g: &LossGradient, lr_scale: f64) -> Result<()> {
    if let Some(grad) = &g.encoder {
        opt.encoder.step_scaled(&mut model.encoder, grad, lr_scale)?;
    }
    if let Some(grad) = &g.node {
        opt.node.step_scaled(&mut model.node, grad, lr_scale)?;
    }
    if let Some(grad) = &g.decoder {
        opt.decoder.step_scaled(&mut model.decoder, grad, lr_scale)?;
    }
    Ok(())
}

fn term_gradient(k: usize, model: &AENodeModel, pairs: &PairMatrices) -> Result<LossGradient> {
    let g = match k {
        0 => l1_gradient(model, pairs)?,
        1 => l2_gradient(model, pairs)?,
        _ => l3_gradient(model, pairs)?,
    };
    if !g.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss term L{}", k + 1)));
    }
    Ok(g)
}

fn add_scaled(acc: &mut Option<MlpGrads>, scale: f64, g: &Option<MlpGrads>) {
    if let Some(g) = g {
        match acc {
            Some(a) => a.axpy(scale, g),
            None => {
                let mut s = g.clone();
                s.scale(scale);
                *acc = Some(s);
            }
        }
    }
}

fn step_inner(
    model: &mut AENodeModel,
    pairs: &PairMatrices,
    config: &TrainConfig,
    opt: &mut Optimizers,
) -> Result<[Option<f64>; 3]> {
    let mut losses = [None; 3];
    match config.mode {
        UpdateMode::Sequential => {
            for k in 0..3 {
                if config.epsilon[k] == 0.0 {
                    continue;
                }
                let g = term_gradient(k, model, pairs)?;
                losses[k] = Some(g.loss);
                apply(opt, model, &g, config.epsilon[k])?;
            }
        }
        UpdateMode::Summed => {
            let mut total = LossGradient {
                loss: 0.0,
                encoder: None,
                node: None,
                decoder: None,
                dl_dlatent0: None,
                dl_dt0: Vec::new(),
                dl_dtn: Vec::new(),
            };
            for k in 0..3 {
                let e = config.epsilon[k];
                if e == 0.0 {
                    continue;
                }
                let g = term_gradient(k, model, pairs)?;
                losses[k] = Some(g.loss);
                add_scaled(&mut total.encoder, e, &g.encoder);
                add_scaled(&mut total.node, e, &g.node);
                add_scaled(&mut total.decoder, e, &g.decoder);
            }
            apply(opt, model, &total, 1.0)?;
        }
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(losses)
}

/// One training iteration on `pairs`. Numerical failures roll the model and
/// optimizer back and are reported as a rejected step.
pub fn train_step(
    model: &mut AENodeModel,
    pairs: &PairMatrices,
    config: &TrainConfig,
    opt: &mut Optimizers,
) -> Result<StepRecord> {
    let backup = (model.clone(), opt.clone());
    let mut rec = StepRecord { iteration: 0, pass: 0, l1: None, l2: None, l3: None, rejected: false };
    match step_inner(model, pairs, config, opt) {
        Ok([l1, l2, l3]) => {
            rec.l1 = l1;
            rec.l2 = l2;
            rec.l3 = l3;
        }
        Err(e @ (Error::NonFinite(_) | Error::Divergence { .. } | Error::Integration { .. })) => {
            log::warn!("rejected training step: {e}");
            *model = backup.0;
            *opt = backup.1;
            rec.rejected = true;
        }
        Err(e) => return Err(e),
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub pass: usize,
    #[serde(with = "super::checkpoint::finite_or_null")]
    pub test_loss: f64,
    pub components: LossComponents,
    pub accepted_epoch: Option<usize>,
}

/// An evaluation whose test loss beat every earlier one. Epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedEpoch {
    pub epoch: usize,
    pub iteration: usize,
    pub pass: usize,
    pub test_loss: f64,
    pub components: LossComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub model: ModelRecord,
}

impl Snapshot {
    pub fn model(&self) -> Result<AENodeModel> {
        AENodeModel::try_from(&self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Running,
    Completed,
    /// Budget spent without improving on the untrained model.
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub evaluations: Vec<Evaluation>,
    pub accepted: Vec<AcceptedEpoch>,
    pub snapshots: Vec<Snapshot>,
    /// Only epochs divisible by this stride are kept (plus the latest).
    pub snapshot_stride: usize,
    pub status: TrainStatus,
}

impl TrainHistory {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            evaluations: Vec::new(),
            accepted: Vec::new(),
            snapshots: Vec::new(),
            snapshot_stride: 1,
            status: TrainStatus::Running,
        }
    }

    pub fn rejected_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.rejected).count()
    }

    pub fn final_epoch(&self) -> Option<&AcceptedEpoch> {
        self.accepted.last()
    }

    fn store_snapshot(&mut self, epoch: usize, model: &AENodeModel, limit: usize) {
        let snap = Snapshot { epoch, model: model.into() };
        // The tail may hold an off-stride "latest" snapshot; it is superseded.
        if let Some(last) = self.snapshots.last() {
            if last.epoch % self.snapshot_stride != 0 {
                self.snapshots.pop();
            }
        }
        self.snapshots.push(snap);
        while self.snapshots.len() > limit {
            self.snapshot_stride *= 2;
            let stride = self.snapshot_stride;
            let n = self.snapshots.len();
            let mut k = 0;
            self.snapshots.retain(|s| {
                k += 1;
                s.epoch % stride == 0 || k == n
            });
        }
    }

    /// Rows `iter,epoch_accepted,L1,L2,L3,test_loss`. Evaluations are attached to the
    /// iteration after which they ran; iteration 0 is the untrained baseline.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iter,epoch_accepted,L1,L2,L3,test_loss\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut evals = self.evaluations.iter().peekable();
        let mut write_eval = |out: &mut String, iter: usize, step: Option<&StepRecord>| {
            let (l1, l2, l3) = step.map_or((None, None, None), |s| (s.l1, s.l2, s.l3));
            let mut wrote = false;
            while let Some(e) = evals.next_if(|e| e.iteration == iter) {
                let acc = e.accepted_epoch.map(|a| a.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{iter},{acc},{},{},{},{}", opt(l1), opt(l2), opt(l3), e.test_loss);
                wrote = true;
            }
            if !wrote && step.is_some() {
                let _ = writeln!(out, "{iter},,{},{},{},", opt(l1), opt(l2), opt(l3));
            }
        };
        write_eval(&mut out, 0, None);
        for s in &self.steps {
            write_eval(&mut out, s.iteration, Some(s));
        }
        out
    }
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: AENodeModel,
    pub optimizers: Optimizers,
    pub history: TrainHistory,
    pub passes_done: usize,
    pub iteration: usize,
    pub best_test_loss: f64,
}

impl TrainState {
    pub fn new(model: AENodeModel, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizers = Optimizers::new(&model, config);
        Ok(Self {
            model,
            optimizers,
            history: TrainHistory::new(),
            passes_done: 0,
            iteration: 0,
            best_test_loss: f64::INFINITY,
        })
    }

    fn evaluate<H>(&mut self, test: &PairMatrices, config: &TrainConfig, hook: &mut H) -> Result<()>
    where
        H: FnMut(&AcceptedEpoch, &AENodeModel),
    {
        let components = match loss_components(&self.model, test) {
            Ok(c) => c,
            Err(Error::Divergence { .. } | Error::Integration { .. } | Error::NonFinite(_)) => {
                LossComponents { l1: f64::NAN, l2: f64::NAN, l3: f64::NAN }
            }
            Err(e) => return Err(e),
        };
        let test_loss = components.weighted(config.epsilon);
        let accept = test_loss.is_finite() && (self.history.accepted.is_empty() || test_loss < self.best_test_loss);
        let mut eval = Evaluation { iteration: self.iteration, pass: self.passes_done, test_loss, components, accepted_epoch: None };
        if accept {
            let epoch = self.history.accepted.len();
            eval.accepted_epoch = Some(epoch);
            self.best_test_loss = test_loss;
            let acc = AcceptedEpoch { epoch, iteration: self.iteration, pass: self.passes_done, test_loss, components };
            self.history.accepted.push(acc);
            self.history.store_snapshot(epoch, &self.model, config.snapshot_limit);
            hook(&acc, &self.model);
        }
        self.history.evaluations.push(eval);
        Ok(())
    }

    fn budget_left(&self, config: &TrainConfig) -> bool {
        self.passes_done < config.epochs && config.max_iterations.map_or(true, |m| self.iteration < m)
    }

    /// Trains until the budget is spent or `stop_after_passes` passes are complete.
    pub fn run<H>(
        &mut self,
        dataset: &Dataset,
        config: &TrainConfig,
        hook: &mut H,
        stop_after_passes: Option<usize>,
    ) -> Result<()>
    where
        H: FnMut(&AcceptedEpoch, &AENodeModel),
    {
        config.validate()?;
        if dataset.train.is_empty() || dataset.test.is_empty() {
            return Err(Error::Config("dataset needs non-empty train and test splits".into()));
        }
        let dim = self.model.physical_dim();
        let train = PairMatrices::from_batch(&dataset.train_batch(), dim)?;
        let test = PairMatrices::from_batch(&dataset.test_batch(), dim)?;
        if self.history.evaluations.is_empty() {
            self.evaluate(&test, config, hook)?;
        }
        while self.budget_left(config) && stop_after_passes.map_or(true, |s| self.passes_done < s) {
            let pass = self.passes_done + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(pass as u64);
            self.optimizers.set_learning_rate(config.learning_rate * config.lr_decay.powi(self.passes_done as i32));
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                if config.max_iterations.is_some_and(|m| self.iteration >= m) {
                    break;
                }
                let pairs = train.select(chunk)?;
                let mut rec = train_step(&mut self.model, &pairs, config, &mut self.optimizers)?;
                self.iteration += 1;
                rec.iteration = self.iteration;
                rec.pass = pass;
                self.history.steps.push(rec);
                if config.eval_interval.is_some_and(|n| self.iteration % n == 0) {
                    self.evaluate(&test, config, hook)?;
                }
            }
            self.passes_done = pass;
            if config.eval_interval.is_none() {
                self.evaluate(&test, config, hook)?;
            }
        }
        if !self.budget_left(config) {
            self.history.status =
                if self.history.accepted.len() > 1 { TrainStatus::Completed } else { TrainStatus::NoImprovement };
            if self.history.status == TrainStatus::NoImprovement && self.iteration > 0 {
                log::warn!("training budget spent without improving on the untrained model");
            }
        }
        Ok(())
    }
}

/// Trains a model on a dataset. `hook` fires on every accepted epoch, including the
/// untrained baseline (epoch 0).
pub fn train<H>(model: AENodeModel, dataset: &Dataset, config: &TrainConfig, mut hook: H) -> Result<(AENodeModel, TrainHistory)>
where
    H: FnMut(&AcceptedEpoch, &AENodeModel),
{
    let mut state = TrainState::new(model, config)?;
    if config.epochs == 0 || config.max_iterations == Some(0) {
        state.history.status = TrainStatus::NoImprovement;
        return Ok((state.model, state.history));
    }
    state.run(dataset, config, &mut hook, None)?;
    Ok((state.model, state.history))
}
