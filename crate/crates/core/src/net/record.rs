use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Layer, MlpParams};
use crate::error::{Error, Result};

pub const RECORD_VERSION: u32 = 1;

/// Serialisable form of one layer. Weights are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub version: u32,
    pub dims: Vec<usize>,
    pub alpha: f64,
    pub layers: Vec<LayerRecord>,
}

impl From<&MlpParams> for MlpRecord {
    fn from(p: &MlpParams) -> Self {
        let layers = p
            .layers
            .iter()
            .map(|l| LayerRecord {
                weights: l.weights.transpose().iter().copied().collect(),
                bias: l.bias.iter().copied().collect(),
            })
            .collect();
        Self { version: RECORD_VERSION, dims: p.dims(), alpha: p.alpha, layers }
    }
}

impl TryFrom<&MlpRecord> for MlpParams {
    type Error = Error;

    fn try_from(r: &MlpRecord) -> Result<Self> {
        if r.version != RECORD_VERSION {
            return Err(Error::Config(format!("unsupported network record version {}", r.version)));
        }
        if r.dims.len() != r.layers.len() + 1 {
            return Err(Error::Shape(format!("{} widths for {} layers", r.dims.len(), r.layers.len())));
        }
        let layers = r
            .layers
            .iter()
            .zip(r.dims.windows(2))
            .map(|(l, w)| {
                let (cols, rows) = (w[0], w[1]);
                if l.weights.len() != rows * cols || l.bias.len() != rows {
                    return Err(Error::Shape(format!("layer record does not match widths {cols}->{rows}")));
                }
                Ok(Layer {
                    weights: DMatrix::from_row_slice(rows, cols, &l.weights),
                    bias: DVector::from_column_slice(&l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpParams::new(layers, r.alpha)
    }
}
