//! Autoencoder + neural-ODE reduced-order modelling of stiff dynamical systems.
//!
//! The crate is split along the pipeline:
//!
//! - [`dynsys`]: stiff toy systems, an adaptive implicit reference integrator and
//!   dataset construction (normalisation, snapshot pairs, train/test split).
//! - [`net`]: a small fully connected ELU network with hand-written backprop and Adam.
//! - [`node`]: fixed-step RK4 in latent space and adjoint sensitivities.
//! - [`model`]: encoder + NODE + decoder, the three-term loss and the training loop.
//! - [`infometrics`]: histogram and matrix-based Renyi estimators, information
//!   planes, data-processing-inequality checks and density analysis.

pub mod dynsys;
pub mod error;
pub mod infometrics;
pub mod model;
pub mod net;
pub mod node;

pub use error::{Error, Result};
