//! Small fully connected networks with hand-written reverse mode and Adam.

mod adam;
mod init;
mod mlp;
mod record;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use init::{init_params, init_params_with};
pub use mlp::{
    elu, elu_derivative, mlp_backward, mlp_backward_weighted, mlp_forward, ForwardCache, Layer, MlpGrads, MlpParams, DEFAULT_ELU_ALPHA,
};
pub use record::{LayerRecord, MlpRecord, RECORD_VERSION};
