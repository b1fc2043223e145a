use serde::{Deserialize, Serialize};

use super::plane::{InfoPlaneRecord, MiPoint};

pub const DEFAULT_DPI_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DpiChain {
    /// `I(Y;T^E_1) ≥ … ≥ I(Y;Ŷ)`.
    #[serde(rename = "1a")]
    Encoder,
    /// `I(T^D_1;Ỹ) ≥ … ≥ I(Ŷ;Ỹ)`, decoder layers counted from the output.
    #[serde(rename = "1b")]
    Decoder,
    /// `I(Y;Ỹ) ≥ I(T^E_1;T^D_1) ≥ … ≥ H(Ŷ)`.
    #[serde(rename = "2")]
    LayerPairs,
}

/// Adjacent chain entries where the later one exceeds the earlier by more than the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiViolation {
    pub epoch: usize,
    pub chain: DpiChain,
    pub upper: String,
    pub lower: String,
    pub upper_value: f64,
    pub lower_value: f64,
    /// Amount by which `lower_value` exceeds `upper_value`.
    pub excess: f64,
}

fn chains(r: &InfoPlaneRecord) -> [(DpiChain, Vec<(String, f64)>); 3] {
    let depth = r.encoder.len();
    let mut a: Vec<(String, f64)> = r.encoder.iter().enumerate().map(|(l, p)| (format!("encoder {}", l + 1), p.input)).collect();
    a.push(("latent".into(), r.bottleneck.input));
    let mut b: Vec<(String, f64)> =
        r.decoder.iter().enumerate().map(|(l, p)| (format!("decoder {}", l + 1), p.output)).collect();
    b.push(("latent".into(), r.bottleneck.output));
    let mut c = vec![("input/output".to_string(), r.outer)];
    c.extend(r.layer_pairs.iter().enumerate().map(|(l, &v)| (format!("pair {}", l + 1), v)));
    c.push((format!("latent entropy (pair {})", depth + 1), r.latent_entropy));
    [(DpiChain::Encoder, a), (DpiChain::Decoder, b), (DpiChain::LayerPairs, c)]
}

/// Checks all three data-processing chains of one record.
pub fn check_dpi(record: &InfoPlaneRecord, tolerance_bits: f64) -> Vec<DpiViolation> {
    let mut out = Vec::new();
    for (chain, entries) in chains(record) {
        for w in entries.windows(2) {
            let excess = w[1].1 - w[0].1;
            if excess > tolerance_bits {
                out.push(DpiViolation {
                    epoch: record.epoch,
                    chain,
                    upper: w[0].0.clone(),
                    lower: w[1].0.clone(),
                    upper_value: w[0].1,
                    lower_value: w[1].1,
                    excess,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseOptions {
    /// Fitting ends once `I(T;Ỹ)` first reaches this fraction of its maximum.
    pub fit_fraction: f64,
    /// Trailing moving-average window.
    pub window: usize,
    /// Minimum joint decrease of both smoothed coordinates, in bits.
    pub tolerance: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self { fit_fraction: 0.9, window: 3, tolerance: 0.05 }
    }
}

pub const MIN_PHASE_EPOCHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PhaseReport {
    /// Fewer than [`MIN_PHASE_EPOCHS`] points.
    Indeterminate,
    Resolved {
        /// Index into the curve where fitting ends.
        fit_end: usize,
        compression: bool,
        /// Index where the smoothed joint decrease first exceeds the tolerance.
        compression_at: Option<usize>,
    },
}

impl PhaseReport {
    pub fn compression_detected(&self) -> bool {
        matches!(self, PhaseReport::Resolved { compression: true, .. })
    }
}

pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..v.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(w);
            v[lo..=k].iter().sum::<f64>() / (k + 1 - lo) as f64
        })
        .collect()
}

/// Fitting and compression phases of one layer's information-plane trajectory.
pub fn detect_phases(curve: &[MiPoint], options: &PhaseOptions) -> PhaseReport {
    if curve.len() < MIN_PHASE_EPOCHS {
        return PhaseReport::Indeterminate;
    }
    let outputs: Vec<f64> = curve.iter().map(|p| p.output).collect();
    let peak = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fit_end = outputs.iter().position(|&v| v >= options.fit_fraction * peak).unwrap_or(0);
    let inputs = moving_average(&curve.iter().map(|p| p.input).collect::<Vec<_>>(), options.window);
    let outputs = moving_average(&outputs, options.window);
    let (mut best_in, mut best_out) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut compression_at = None;
    // Joint decrease measured from the running maxima after the fitting phase.
    for k in fit_end..curve.len() {
        best_in = best_in.max(inputs[k]);
        best_out = best_out.max(outputs[k]);
        if best_in - inputs[k] > options.tolerance && best_out - outputs[k] > options.tolerance {
            compression_at = Some(k);
            break;
        }
    }
    PhaseReport::Resolved { fit_end, compression: compression_at.is_some(), compression_at }
}
