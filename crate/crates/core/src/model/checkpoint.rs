use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{AENodeModel, ModelRecord};
use super::predict::Scaling;
use super::train::{Optimizers, TrainConfig, TrainHistory, TrainState};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialises non-finite floats as `null` and reads `null` back as NaN.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Full training state: model, optimizer moments, history with snapshots, and the
/// position in the pass schedule. Per-pass shuffles derive from `(seed, pass)`, so
/// resuming reproduces an uninterrupted run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelRecord,
    pub scaling: Scaling,
    pub train_config: TrainConfig,
    pub optimizers: Optimizers,
    pub history: TrainHistory,
    pub passes_done: usize,
    pub iteration: usize,
    pub best_test_loss: Option<f64>,
}

impl Checkpoint {
    pub fn new(state: &TrainState, scaling: &Scaling, config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: (&state.model).into(),
            scaling: scaling.clone(),
            train_config: config.clone(),
            optimizers: state.optimizers.clone(),
            history: state.history.clone(),
            passes_done: state.passes_done,
            iteration: state.iteration,
            best_test_loss: state.best_test_loss.is_finite().then_some(state.best_test_loss),
        }
    }

    pub fn model(&self) -> Result<AENodeModel> {
        AENodeModel::try_from(&self.model)
    }

    pub fn state(&self) -> Result<TrainState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", self.version)));
        }
        Ok(TrainState {
            model: self.model()?,
            optimizers: self.optimizers.clone(),
            history: self.history.clone(),
            passes_done: self.passes_done,
            iteration: self.iteration,
            best_test_loss: self.best_test_loss.unwrap_or(f64::INFINITY),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
