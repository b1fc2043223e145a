//! Stiff toy systems, the reference integrator and dataset construction.

mod csv;
mod dataset;
mod integrate;
mod stiffness;
mod system;
mod trajectory;

pub use csv::{format_trajectory, ingest_csv, parse_trajectories, write_trajectory_csv};
pub use dataset::{
    generate_dataset, generate_snapshots, ignition_sweep, sample_snapshots, split_indices, stepped_range, Dataset, DatasetOptions,
    InitialCondition, Normalization, PairBatch, SnapshotPair,
};
pub use integrate::{integrate_reference, integrate_reference_with, IntegratorOptions};
pub use stiffness::stiffness_ratio;
pub use system::{
    ignition_rhs, jacobian_or_fd, robertson_rhs, IgnitionParams, IgnitionSystem, LinearSystem, Robertson, StiffSystem,
};
pub use trajectory::Trajectory;
