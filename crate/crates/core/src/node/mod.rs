//! Fixed-step latent integration and adjoint sensitivities.

mod adjoint;
mod field;
#[cfg(test)]
mod oracle;
mod rk4;

pub use adjoint::{adjoint_backward, adjoint_backward_trajectory, augmented_dynamics, AdjointResult, AdjointState};
pub use field::{LinearField, NodeField, VectorField, Vjp};
pub use rk4::{odesolve, odesolve_batch, rk4_step, rk4_step_batch, LatentTrajectory, DIVERGENCE_GUARD};
