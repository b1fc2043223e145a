use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trace-normalised Gram matrix with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct NpdMatrix {
    pub entries: DMatrix<f64>,
    /// Non-increasing; values within rounding noise of zero are set to zero.
    pub eigenvalues: Vec<f64>,
}

impl NpdMatrix {
    /// Normalises a symmetric positive semi-definite kernel matrix as
    /// `A_ij = K_ij / (N sqrt(K_ii K_jj))` and computes its spectrum.
    pub fn from_kernel(k: &DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n < 2 || k.ncols() != n {
            return Err(Error::Shape(format!("kernel matrix must be square with N >= 2, got {:?}", k.shape())));
        }
        let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Domain("kernel diagonal must be positive".into()));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (n as f64 * (diag[i] * diag[j]).sqrt()));
        Self::from_normalised(entries)
    }

    fn from_normalised(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gram matrix entries".into()));
        }
        let mut eigenvalues: Vec<f64> = entries.clone().symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        // Eigenvalues within rounding noise of zero would otherwise dominate small orders.
        let cutoff = entries.nrows() as f64 * f64::EPSILON * eigenvalues[0].abs();
        for l in &mut eigenvalues {
            if *l <= cutoff {
                *l = 0.0;
            }
        }
        Ok(Self { entries, eigenvalues })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// Kernel bandwidth per variable set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `σ = h n^(-1/(4+d))` with `h = factor × mean per-dimension standard deviation`.
    Silverman { factor: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MIConfig {
    /// Rényi order.
    pub alpha: f64,
    pub bandwidth: Bandwidth,
    /// Samples used for Gram matrices.
    pub probe_size: usize,
    /// Lower clamp applied to mutual-information estimates.
    pub floor: Option<f64>,
}

impl Default for MIConfig {
    fn default() -> Self {
        Self { alpha: 1.01, bandwidth: Bandwidth::Silverman { factor: 1.06 }, probe_size: 512, floor: Some(0.0) }
    }
}

impl MIConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.probe_size < 8 {
            return Err(Error::Config(format!("probe size must be at least 8, got {}", self.probe_size)));
        }
        match self.bandwidth {
            Bandwidth::Silverman { factor } if !(factor > 0.0) => {
                Err(Error::Config(format!("bandwidth factor must be positive, got {factor}")))
            }
            Bandwidth::Fixed(s) if !(s > 0.0) => Err(Error::Config(format!("bandwidth must be positive, got {s}"))),
            _ => Ok(()),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::Config(format!("Renyi order must be positive and not 1, got {alpha}")));
    }
    Ok(())
}

pub fn silverman_sigma(n: usize, d: usize, h: f64) -> f64 {
    h * (n as f64).powf(-1.0 / (4.0 + d as f64))
}

/// Mean per-dimension population standard deviation; samples are columns.
pub fn mean_std(samples: &DMatrix<f64>) -> f64 {
    let n = samples.ncols() as f64;
    let d = samples.nrows();
    if d == 0 || samples.ncols() == 0 {
        return 0.0;
    }
    let total: f64 = samples
        .row_iter()
        .map(|r| {
            let m = r.sum() / n;
            (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum();
    total / d as f64
}

/// Gaussian-kernel NPD matrix of a sample set; samples are columns.
pub fn gram_npd(samples: &DMatrix<f64>, sigma: f64) -> Result<NpdMatrix> {
    let n = samples.ncols();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 samples, got {n}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("kernel width must be positive, got {sigma}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples passed to the Gram matrix".into()));
    }
    let sq: Vec<f64> = samples.column_iter().map(|c| c.norm_squared()).collect();
    let g = samples.transpose() * samples;
    let scale = 1.0 / (2.0 * sigma * sigma);
    let inv_n = 1.0 / n as f64;
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            inv_n
        } else {
            let d2 = (sq[i] + sq[j] - 2.0 * g[(i.min(j), i.max(j))]).max(0.0);
            (-d2 * scale).exp() * inv_n
        }
    });
    NpdMatrix::from_normalised(entries)
}

/// Kernel width for one variable set under `config`.
pub fn kernel_width(samples: &DMatrix<f64>, config: &MIConfig) -> f64 {
    match config.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Silverman { factor } => {
            let h = factor * mean_std(samples);
            // A constant set gives a rank-one Gram matrix at any width.
            if h > 0.0 {
                silverman_sigma(samples.ncols(), samples.nrows(), h)
            } else {
                1.0
            }
        }
    }
}

/// Gram matrix of one variable set with the configured bandwidth.
pub fn gram_for(samples: &DMatrix<f64>, config: &MIConfig) -> Result<NpdMatrix> {
    gram_npd(samples, kernel_width(samples, config))
}

/// Rényi α-entropy in bits from the spectrum of an NPD matrix.
pub fn renyi_entropy_matrix(a: &NpdMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    renyi_entropy_spectrum(&a.eigenvalues, alpha)
}

fn renyi_entropy_spectrum(eigenvalues: &[f64], alpha: f64) -> Result<f64> {
    let s: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).map(|l| l.powf(alpha)).sum();
    if !(s > 0.0) {
        return Err(Error::Undefined("NPD matrix has no positive eigenvalue".into()));
    }
    let h = s.log2() / (1.0 - alpha);
    Ok(h.clamp(0.0, (eigenvalues.len() as f64).log2()))
}

/// Joint entropy from the trace-normalised Hadamard product.
pub fn joint_renyi_entropy(a: &NpdMatrix, b: &NpdMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if a.entries.shape() != b.entries.shape() {
        return Err(Error::Shape(format!("Gram matrices {:?} and {:?} differ", a.entries.shape(), b.entries.shape())));
    }
    let h = a.entries.component_mul(&b.entries);
    let tr = h.trace();
    if !(tr > 0.0) {
        return Err(Error::Undefined("Hadamard product has zero trace".into()));
    }
    renyi_entropy_matrix(&NpdMatrix::from_normalised(h / tr)?, alpha)
}

/// `H(A) + H(B) − H(A, B)` from precomputed Gram matrices. `same_variable` marks
/// two views of one sample set, whose joint distribution is the marginal.
pub fn renyi_mi_gram(a: &NpdMatrix, b: &NpdMatrix, alpha: f64, same_variable: bool) -> Result<f64> {
    let ha = renyi_entropy_matrix(a, alpha)?;
    if same_variable {
        return Ok(ha);
    }
    let hb = renyi_entropy_matrix(b, alpha)?;
    Ok(ha + hb - joint_renyi_entropy(a, b, alpha)?)
}

/// Matrix-based Rényi mutual information in bits; samples are columns.
pub fn renyi_mi(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &MIConfig) -> Result<f64> {
    config.validate()?;
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("{} x samples paired with {} y samples", x.ncols(), y.ncols())));
    }
    let same = x == y;
    let a = gram_for(x, config)?;
    let mi = if same { renyi_mi_gram(&a, &a, config.alpha, true)? } else {
        renyi_mi_gram(&a, &gram_for(y, config)?, config.alpha, false)?
    };
    Ok(apply_floor(mi, config))
}

pub(crate) fn apply_floor(mi: f64, config: &MIConfig) -> f64 {
    config.floor.map_or(mi, |f| mi.max(f))
}
