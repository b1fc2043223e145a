//! Encoder, latent NODE and decoder trained with three loss terms.

mod checkpoint;
mod loss;
mod network;
mod predict;
mod stiffness;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{
    l1_from_latent, l1_gradient, l2_gradient, l3_from_latent, l3_gradient, loss_components, LossComponents,
    LossGradient, PairMatrices,
};
pub use network::{columns, AENodeModel, ModelConfig, ModelRecord};
pub use predict::{layer_trajectories, predict_trajectory, rrmse, LatentStepping, LayerTrajectories, Prediction, Scaling};
pub use stiffness::{
    latent_jacobian, max_stable_rk4_step, rk4_amplification, stiffness_report, StiffnessOptions, StiffnessReport,
};
pub use train::{
    train, train_step, AcceptedEpoch, Evaluation, Optimizers, Snapshot, StepRecord, TrainConfig,
    TrainHistory, TrainState, TrainStatus, UpdateMode,
};
