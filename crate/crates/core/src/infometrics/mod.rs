//! Histogram and matrix-based Rényi information estimators, information planes,
//! data-processing checks, phase detection and density analysis.

mod analysis;
mod density;
mod hist;
mod plane;
mod renyi;

pub use analysis::{
    check_dpi, detect_phases, moving_average, DpiChain, DpiViolation, PhaseOptions, PhaseReport, DEFAULT_DPI_TOLERANCE,
    MIN_PHASE_EPOCHS,
};
pub use density::{bimodality_gap, kde_pdf, local_maxima, padded_grid, silverman_bandwidth};
pub use hist::{freedman_diaconis_bins, kl_divergence_hist, mi_hist, shannon_entropy_hist};
pub use plane::{info_plane_record, info_planes, ip1_rows, ip2_rows, InfoPlaneRecord, MiPoint};
pub use renyi::{
    gram_for, gram_npd, joint_renyi_entropy, kernel_width, mean_std, renyi_entropy_matrix, renyi_mi, renyi_mi_gram,
    silverman_sigma, Bandwidth, MIConfig, NpdMatrix,
};
